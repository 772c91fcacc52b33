import json

from fastapi.testclient import TestClient

from seculex.service import create_app

scenario = json.load(open("src/seculex/data/lv-feeder.json"))
client = TestClient(create_app())

r = client.post("/allocate", json=scenario)
print("allocate", r.status_code)
print(json.dumps(r.json(), indent=1)[:600])

r = client.post("/clear", json=scenario)
print("clear", r.status_code)
print(json.dumps(r.json(), indent=1))

r = client.post("/verify", json=scenario, params={"samples": 50, "seed": 1})
print("verify", r.status_code, r.json())

r = client.post("/compare", json=scenario)
print("compare", r.status_code)
body = r.json()
for s in body["schemes"]:
    print(
        s["scheme"],
        s.get("variant"),
        s["total_curtailment_kw"],
        s["renewable_utilization_pct"],
        s["security_violation"],
        s["opportunity_loss_eur"],
        s["market_social_welfare_eur"],
        s["incentivizes_flexibility"],
    )

# session lifecycle
r = client.post("/sessions", json=scenario)
print("open", r.status_code, r.json()["session_id"])
sid = r.json()["session_id"]
orders = scenario["orders"]
for o in orders:
    r = client.post(f"/sessions/{sid}/orders", json=o)
    print("submit", o["id"], r.status_code)
    r = client.post(f"/sessions/{sid}/clear")
    print(" clear", r.status_code, r.json()["acceptances_kw"], r.json()["payments_eur"])
r = client.post(f"/sessions/{sid}/close")
print("close", r.status_code, r.json()["open"])
r = client.get(f"/sessions/{sid}")
print("state", r.status_code, r.json()["open"], len(r.json()["orders"]))

# error mapping
r = client.post("/sessions/nope/clear")
print("missing session:", r.status_code, r.json())
bad = dict(scenario)
bad["network"] = dict(scenario["network"], lines=scenario["network"]["lines"][1:])
r = client.post("/allocate", json=bad)
print("disconnected:", r.status_code, r.json())
