# Nodes are weighted by the bytes on their incoming and outgoing edges.
# Accepts any split into exactly 5 clusters in which every cluster is a
# contiguous run of nodes in weight order. Nothing else may change.
def _rest(g, drop):
    nodes = {n: {k: v for k, v in d.items() if k != drop} for n, d in g.nodes(data=True)}
    edges = sorted((u, v, sorted(d.items())) for u, v, d in g.edges(data=True))
    return nodes, edges


if _rest(G, "cluster") != _rest(G_before, "cluster"):
    result = "graph"
elif any("cluster" not in d for _, d in G.nodes(data=True)):
    result = False
else:
    weight = {n: 0 for n in G_before.nodes}
    for u, v, d in G_before.edges(data=True):
        weight[u] += d["bytes"]
        weight[v] += d["bytes"]
    labels = [repr(G.nodes[n]["cluster"]) for n in sorted(weight, key=lambda n: (weight[n], n))]
    runs = [labels[0]] + [b for a, b in zip(labels, labels[1:]) if a != b]
    result = len(set(labels)) == 5 and len(runs) == 5
