result = int((~nodes["id"].isin(edges["dst"])).sum())
