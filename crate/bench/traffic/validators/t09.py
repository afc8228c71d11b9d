# Every node carries a `color`; two nodes share a color exactly when they
# share a /16 prefix. Nothing else in the graph may change.
def _prefix(n):
    return ".".join(n.split(".")[:2])


def _rest(g, drop):
    nodes = {n: {k: v for k, v in d.items() if k != drop} for n, d in g.nodes(data=True)}
    edges = sorted((u, v, sorted(d.items())) for u, v, d in g.edges(data=True))
    return nodes, edges


if _rest(G, "color") != _rest(G_before, "color"):
    result = "graph"
elif any("color" not in d for _, d in G.nodes(data=True)):
    result = False
else:
    pairs = {(_prefix(n), repr(d["color"])) for n, d in G.nodes(data=True)}
    prefixes = {p for p, _ in pairs}
    colors = {c for _, c in pairs}
    result = len(pairs) == len(prefixes) == len(colors)
