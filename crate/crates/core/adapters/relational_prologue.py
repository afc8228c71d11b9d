import re as _re
import sqlite3

_doc = _load_input()
_conn = sqlite3.connect(":memory:", isolation_level=None)
_column_kinds = {}


def _quote(name):
    return '"' + name.replace('"', '""') + '"'


def _kind(values):
    present = [v for v in values if v is not None]
    if present and all(isinstance(v, bool) for v in present):
        return "bool"
    if present and all(isinstance(v, list) for v in present):
        return "list"
    return "plain"


for _name in ("nodes", "edges"):
    _t = _doc[_name]
    _conn.execute("CREATE TABLE %s (%s)" % (_name, ", ".join(_quote(c) for c in _t["columns"])))
    _column_kinds[_name] = {c: _kind([r[i] for r in _t["rows"]]) for i, c in enumerate(_t["columns"])}
    _conn.executemany(
        "INSERT INTO %s VALUES (%s)" % (_name, ", ".join("?" * len(_t["columns"]))),
        [[_json.dumps(v) if isinstance(v, list) else v for v in r] for r in _t["rows"]],
    )


def _dump(name):
    cur = _conn.execute("SELECT * FROM %s" % name)
    return [d[0] for d in cur.description], [list(r) for r in cur.fetchall()]


def _restore(name, columns, rows):
    kinds = _column_kinds[name]
    for i, c in enumerate(columns):
        kind = kinds.get(c, "plain")
        for row in rows:
            v = row[i]
            if isinstance(v, bytes):
                raise _Malformed("binary value in column %s" % c)
            if v is None:
                continue
            if kind == "bool" and v in (0, 1):
                row[i] = bool(v)
            elif kind == "list" and isinstance(v, str):
                try:
                    row[i] = _json.loads(v)
                except ValueError:
                    pass
            elif isinstance(v, float):
                row[i] = _finite(v)
    return {"columns": columns, "rows": rows}


_snapshot = {n: sorted(map(repr, _dump(n)[1])) for n in ("nodes", "edges")}


def _authorizer(action, arg1, arg2, dbname, source):
    if action in (sqlite3.SQLITE_ATTACH, sqlite3.SQLITE_DETACH):
        _violation("attaching a database file")
    return sqlite3.SQLITE_OK


def _split(code):
    statements, buf, start_line, line = [], "", 1, 1
    for ch in code:
        if not buf.strip():
            start_line = line
        buf += ch
        if ch == "\n":
            line += 1
        if ch == ";" and sqlite3.complete_statement(buf):
            statements.append((start_line, buf))
            buf = ""
    if buf.strip():
        statements.append((start_line, buf))
    return statements


_SYNTAX_MARKERS = ("syntax error", "incomplete input", "unrecognized token")


def _run_sql(code):
    last = None
    for line, stmt in _split(code):
        if not stmt.strip().rstrip(";").strip():
            continue
        if _re.search(r"\bvacuum\b", stmt, _re.IGNORECASE) or _re.search(r"\bload_extension\b", stmt, _re.IGNORECASE):
            _violation("statement touches files outside the working directory")
        try:
            cur = _conn.execute(stmt)
            if cur.description is not None:
                last = ([d[0] for d in cur.description], cur.fetchall())
        except MemoryError:
            _fail("memory", "MemoryError", "MemoryError: memory limit exceeded")
        except sqlite3.Warning as exc:
            _fail("syntax", type(exc).__name__, "%s: %s (line %d)" % (type(exc).__name__, exc, line))
        except sqlite3.Error as exc:
            text = str(exc)
            phase = "syntax" if any(m in text for m in _SYNTAX_MARKERS) else "runtime"
            _fail(phase, type(exc).__name__, "%s: %s (line %d)" % (type(exc).__name__, text, line))
    return last


def _rows_envelope(last):
    if last is None:
        return {"kind": "none", "value": None}
    columns, rows = last
    for r in rows:
        for v in r:
            if isinstance(v, bytes):
                raise _Malformed("binary value in result")
    if len(columns) == 1 and len(rows) == 1:
        value = _scalar(rows[0][0])
        return {"kind": "none", "value": None} if value is None else {"kind": "scalar", "value": value}
    if len(columns) == 1:
        return {"kind": "list", "value": [_scalar(r[0]) for r in rows]}
    return {"kind": "table", "value": {"columns": columns, "rows": [[_scalar(v) for v in r] for r in rows]}}
