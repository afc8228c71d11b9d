result = nx.radius(G.to_undirected())
