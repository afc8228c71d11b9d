for _, _, d in G.edges(data=True):
    d["bytes_per_packet"] = d["bytes"] / d["packets"]
