import pandas as pd

_doc = _load_input()
_int_columns = {}
_frames = {}
for _name in ("nodes", "edges"):
    _t = _doc[_name]
    _frames[_name] = pd.DataFrame(_t["rows"], columns=_t["columns"], dtype=object if not _t["rows"] else None)
    _int_columns[_name] = {
        c for i, c in enumerate(_t["columns"])
        if _t["rows"] and all(r[i] is None or (isinstance(r[i], int) and not isinstance(r[i], bool)) for r in _t["rows"])
    }
nodes, edges = _frames["nodes"], _frames["edges"]
_snapshot = (nodes.copy(), edges.copy())


def _export_view(df, name):
    if not isinstance(df, pd.DataFrame):
        raise _Malformed("`%s` is no longer a DataFrame" % name)
    table = _dataframe_table(df)
    for i, c in enumerate(table["columns"]):
        if c in _int_columns[name]:
            for row in table["rows"]:
                if isinstance(row[i], float) and row[i].is_integer():
                    row[i] = int(row[i])
    return table
