totals = {}
for u, _, d in G.edges(data=True):
    prefix = ".".join(u.split(".")[:2])
    totals[prefix] = totals.get(prefix, 0) + d["bytes"]
result = min(totals, key=totals.get)
