_ns = {"__name__": "__main__", "nodes": nodes, "edges": edges, "pd": pd}
del nodes, edges
_install_guard()
_run_python(_CODE, _ns)
try:
    _env = _envelope(_ns.get("result"))
    _n, _e = _ns.get("nodes"), _ns.get("edges")
    if isinstance(_n, pd.DataFrame) and isinstance(_e, pd.DataFrame) and _n.equals(_snapshot[0]) and _e.equals(_snapshot[1]):
        _after = None
    else:
        _after = {"directed": _doc["directed"], "nodes": _export_view(_n, "nodes"), "edges": _export_view(_e, "edges")}
except Exception as _exc:  # noqa: BLE001
    _fail("envelope-malformed", "EnvelopeMalformed", "EnvelopeMalformed: %s" % _exc)
_frame(_env)
_frame(_after)
