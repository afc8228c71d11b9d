result = nx.shortest_path_length(G.to_undirected(), "10.0.138.195", "15.76.88.111")
