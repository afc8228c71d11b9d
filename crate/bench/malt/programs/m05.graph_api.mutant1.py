rows = []
for c, d in G.nodes(data=True):
    if d["type"] != "CHASSIS":
        continue
    total = 0
    for _, s, e in G.out_edges(c, data=True):
        if e["kind"] != "CONTAINS":
            continue
        for _, p, f in G.out_edges(s, data=True):
            if f["kind"] == "CONTAINS" and G.nodes[p]["type"] == "PORT":
                total += 1
    rows.append({"chassis": c, "total_speed": total})
result = rows
