contained = edges.loc[(edges["src"] == "ju1.a1.m1.s2c1") & (edges["kind"] == "CONTAINS"), "dst"]
result = nodes.loc[nodes["id"].isin(contained) & (nodes["type"] == "PORT"), "id"].tolist()
