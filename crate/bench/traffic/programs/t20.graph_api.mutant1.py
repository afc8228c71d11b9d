received = {n: sum(d["bytes"] for _, _, d in G.in_edges(n, data=True)) for n in G.nodes}
G.remove_node(max(received, key=received.get))
result = nx.number_strongly_connected_components(G)
