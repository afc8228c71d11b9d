result = nx.diameter(G.to_undirected())
