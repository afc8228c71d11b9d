nodes = nodes[~nodes["id"].str.startswith("15.76.")]
edges = edges[~edges["src"].str.startswith("15.76.") & ~edges["dst"].str.startswith("15.76.")]
