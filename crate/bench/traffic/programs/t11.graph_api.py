totals = {}
for u, _, d in G.edges(data=True):
    totals[u] = totals.get(u, 0) + d["bytes"]
result = sorted(totals, key=totals.get, reverse=True)[:5]
