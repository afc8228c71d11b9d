totals = {}
for u, v, d in G.edges(data=True):
    pu = ".".join(u.split(".")[:2])
    totals[pu] = totals.get(pu, 0) + d["bytes"]
result = [{"prefix": p, "bytes": b} for p, b in totals.items()]
