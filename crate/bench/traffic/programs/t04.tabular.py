result = int(edges["bytes"].sum())
