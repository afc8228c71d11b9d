totals = {}
for u, _, d in G.edges(data=True):
    totals[u] = totals.get(u, 0) + d["bytes"]
result = [{"node": n, "total_bytes": b} for n, b in totals.items()]
