_conn.set_authorizer(_authorizer)
_install_guard()
try:
    _last = _run_sql(_CODE)
except BaseException as _exc:  # noqa: BLE001
    _runtime_failure(_exc)
try:
    _env = _rows_envelope(_last)
    _dumps = {}
    for _name in ("nodes", "edges"):
        try:
            _dumps[_name] = _dump(_name)
        except sqlite3.Error as _exc:
            raise _Malformed("table `%s` is unreadable: %s" % (_name, _exc))
    if all(sorted(map(repr, _dumps[n][1])) == _snapshot[n] for n in _dumps) and all(
        _dumps[n][0] == _doc[n]["columns"] for n in _dumps
    ):
        _after = None
    else:
        _after = {"directed": _doc["directed"], "nodes": _restore("nodes", *_dumps["nodes"]), "edges": _restore("edges", *_dumps["edges"])}
except Exception as _exc:  # noqa: BLE001
    _fail("envelope-malformed", "EnvelopeMalformed", "EnvelopeMalformed: %s" % _exc)
_frame(_env)
_frame(_after)
