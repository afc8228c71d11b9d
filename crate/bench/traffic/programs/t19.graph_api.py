result = nx.number_strongly_connected_components(G)
