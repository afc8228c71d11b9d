result = int(edges["bytes"].max())
