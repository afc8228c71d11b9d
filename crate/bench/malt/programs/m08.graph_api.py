rows = []
for c, d in G.nodes(data=True):
    if d["type"] != "CHASSIS":
        continue
    count = 0
    for _, s, e in G.out_edges(c, data=True):
        if e["kind"] != "CONTAINS":
            continue
        count += sum(1 for _, p, f in G.out_edges(s, data=True) if f["kind"] == "CONTAINS" and G.nodes[p].get("speed") == 100)
    rows.append({"chassis": c, "ports_100": count})
result = sorted(rows, key=lambda r: (-r["ports_100"], r["chassis"]))
