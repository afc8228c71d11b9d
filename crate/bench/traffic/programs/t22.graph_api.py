totals = {}
for u, v, d in G.edges(data=True):
    pu, pv = ".".join(u.split(".")[:2]), ".".join(v.split(".")[:2])
    if pu != pv:
        totals[pu] = totals.get(pu, 0) + d["bytes"]
result = [{"prefix": p, "bytes": b} for p, b in totals.items()]
