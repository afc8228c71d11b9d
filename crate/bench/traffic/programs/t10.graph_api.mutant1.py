totals = {}
for _, v, d in G.edges(data=True):
    totals[v] = totals.get(v, 0) + d["bytes"]
result = [{"node": n, "total_bytes": b} for n, b in totals.items()]
