weight = {n: 0 for n in G.nodes}
for u, v, d in G.edges(data=True):
    weight[u] += d["bytes"]
    weight[v] += d["bytes"]
ranked = sorted(G.nodes, key=lambda n: weight[n])
gaps = sorted(range(1, len(ranked)), key=lambda i: weight[ranked[i]] - weight[ranked[i - 1]], reverse=True)[:4]
cluster = 0
for i, n in enumerate(ranked):
    if i in gaps:
        cluster += 1
    G.nodes[n]["cluster"] = cluster
