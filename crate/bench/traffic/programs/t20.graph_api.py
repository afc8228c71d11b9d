sent = {n: sum(d["bytes"] for _, _, d in G.out_edges(n, data=True)) for n in G.nodes}
G.remove_node(max(sent, key=sent.get))
result = nx.number_strongly_connected_components(G)
