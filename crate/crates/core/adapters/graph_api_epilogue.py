_ns = {"__name__": "__main__", "G": G, "nx": nx}
del G
_install_guard()
_run_python(_CODE, _ns)
try:
    _env = _envelope(_ns.get("result"))
    _after = _export_graph(_ns.get("G"))
except Exception as _exc:  # noqa: BLE001
    _fail("envelope-malformed", "EnvelopeMalformed", "EnvelopeMalformed: %s" % _exc)
_frame(_env)
_frame(_after)
