import networkx as nx


def _build_graph(doc):
    edges = doc["edges"]
    pairs = [(e["src"], e["dst"]) if doc["directed"] else tuple(sorted((e["src"], e["dst"]))) for e in edges]
    multi = len(set(pairs)) != len(pairs)
    if doc["directed"]:
        g = nx.MultiDiGraph() if multi else nx.DiGraph()
    else:
        g = nx.MultiGraph() if multi else nx.Graph()
    for node_id, attrs in doc["nodes"].items():
        g.add_node(node_id, **attrs)
    for e in edges:
        g.add_edge(e["src"], e["dst"], **e["attrs"])
    return g


def _export_attrs(data):
    out = {}
    for key, value in data.items():
        v = _cell(value)
        if v is not None:
            out[str(key)] = v
    return out


def _export_graph(g):
    if not isinstance(g, nx.Graph):
        raise _Malformed("`G` is no longer a networkx graph")
    nodes = {}
    for node_id, data in g.nodes(data=True):
        if not isinstance(node_id, str) or not node_id:
            raise _Malformed("node id %r is not non-empty text" % (node_id,))
        nodes[node_id] = _export_attrs(data)
    edges = [{"src": u, "dst": v, "attrs": _export_attrs(d)} for u, v, d in g.edges(data=True)]
    return {"directed": g.is_directed(), "nodes": nodes, "edges": edges}


G = _build_graph(_load_input())
