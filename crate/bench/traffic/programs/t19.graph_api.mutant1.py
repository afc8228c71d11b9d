result = nx.number_weakly_connected_components(G)
