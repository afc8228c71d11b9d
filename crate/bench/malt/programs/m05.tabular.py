contains = edges[edges["kind"] == "CONTAINS"]
chassis = nodes.loc[nodes["type"] == "CHASSIS", ["id"]].rename(columns={"id": "chassis"})
switches = contains.rename(columns={"src": "chassis", "dst": "switch"})[["chassis", "switch"]]
ports = contains.rename(columns={"src": "switch", "dst": "port"})[["switch", "port"]]
speeds = nodes.loc[nodes["type"] == "PORT", ["id", "speed"]].rename(columns={"id": "port"})
joined = chassis.merge(switches, on="chassis").merge(ports, on="switch").merge(speeds, on="port")
totals = joined.groupby("chassis", as_index=False)["speed"].sum().rename(columns={"speed": "total_speed"})
result = chassis.merge(totals, on="chassis", how="left").fillna({"total_speed": 0})
result["total_speed"] = result["total_speed"].astype(int)
