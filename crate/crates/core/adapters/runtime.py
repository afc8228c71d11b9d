# Harness runtime shared by every executor adapter.
# argv: [program, input_file, workdir]
import json as _json
import math as _math
import os as _os
import sys as _sys
import traceback as _traceback

_INPUT = _sys.argv[1]
_WORKDIR = _os.path.realpath(_sys.argv[2])
_CHANNEL = 3
_VIOLATION_EXIT = 86


def _frame(obj):
    data = _json.dumps(obj, allow_nan=False, separators=(",", ":")).encode("utf-8")
    payload = b"%d\n" % len(data) + data
    while payload:
        n = _os.write(_CHANNEL, payload)
        payload = payload[n:]


def _fail(phase, etype, message, tb=""):
    _frame({"error": {"phase": phase, "type": etype, "message": message, "traceback": tb}})
    _sys.stdout.flush()
    _sys.stderr.flush()
    _os._exit(0)


class _Malformed(Exception):
    pass


def _scalar(v):
    """Plain JSON scalar for v, or raise _Malformed. NaN and None map to None."""
    if v is None:
        return None
    if isinstance(v, bool):
        return v
    if isinstance(v, int):
        return v
    if isinstance(v, float):
        return None if _math.isnan(v) else _finite(v)
    if isinstance(v, str):
        return v
    mod = type(v).__module__
    if mod.startswith("numpy"):
        if hasattr(v, "item") and getattr(v, "ndim", 0) == 0:
            return _scalar(v.item())
    if mod.startswith("pandas"):
        name = type(v).__name__
        if name in ("NAType", "NaTType"):
            return None
        if name == "Timestamp":
            return v.isoformat()
    raise _Malformed("unsupported value of type %s" % type(v).__name__)


def _finite(f):
    if _math.isinf(f):
        raise _Malformed("infinite number in result")
    return f


def _cell(v):
    """Scalar or flat list of scalars (one level of nesting)."""
    if isinstance(v, (list, tuple, set, frozenset)) or _is_array(v):
        items = _ordered(v)
        out = []
        for item in items:
            s = _scalar(item)
            if s is None:
                raise _Malformed("null inside a nested list")
            out.append(s)
        return out
    return _scalar(v)


def _is_array(v):
    return type(v).__module__.startswith("numpy") and getattr(v, "ndim", 0) >= 1


def _ordered(v):
    if isinstance(v, (set, frozenset)):
        return sorted(v, key=lambda x: (type(x).__name__, repr(x)))
    if _is_array(v):
        return v.tolist()
    return list(v)


def _table_from_rows(rows):
    columns = [str(c) for c in rows[0].keys()]
    out = []
    for r in rows:
        if sorted(str(c) for c in r.keys()) != sorted(columns):
            raise _Malformed("table rows do not share a column set")
        by_name = {str(k): v for k, v in r.items()}
        out.append([_cell(by_name[c]) for c in columns])
    return {"columns": columns, "rows": out}


def _dataframe_table(df):
    if df.index.name is not None or any(n is not None for n in getattr(df.index, "names", [])):
        df = df.reset_index()
    columns = [str(c) for c in df.columns]
    if len(set(columns)) != len(columns):
        raise _Malformed("duplicate column names in result table")
    rows = [[_cell(v) for v in row] for row in df.itertuples(index=False, name=None)]
    return {"columns": columns, "rows": rows}


def _envelope(result):
    """Converts a program's `result` into the wire envelope."""
    if result is None:
        return {"kind": "none", "value": None}
    mod = type(result).__module__
    name = type(result).__name__
    if mod.startswith("pandas"):
        if name == "DataFrame":
            return {"kind": "table", "value": _dataframe_table(result)}
        if name in ("Series", "Index"):
            return {"kind": "list", "value": [_cell(v) for v in result.tolist()]}
    if isinstance(result, dict):
        rows = [[_cell(k), _cell(v)] for k, v in result.items()]
        return {"kind": "table", "value": {"columns": ["key", "value"], "rows": rows}}
    if isinstance(result, (list, tuple, set, frozenset)) or _is_array(result) or name in ("dict_keys", "dict_values", "generator", "map", "filter"):
        items = list(result) if name in ("generator", "map", "filter", "dict_keys", "dict_values") else _ordered(result)
        if items and all(isinstance(i, dict) for i in items):
            return {"kind": "table", "value": _table_from_rows(items)}
        return {"kind": "list", "value": [_cell(i) for i in items]}
    value = _scalar(result)
    if value is None:
        return {"kind": "none", "value": None}
    return {"kind": "scalar", "value": value}


def _generated_line(tb):
    line = None
    for fs in _traceback.extract_tb(tb):
        if fs.filename == "<generated>":
            line = fs.lineno
    return line


def _describe(exc, line):
    text = "%s: %s" % (type(exc).__name__, exc)
    if line is not None:
        text += " (line %d)" % line
    return text


def _runtime_failure(exc):
    if isinstance(exc, MemoryError):
        _fail("memory", type(exc).__name__, "MemoryError: memory limit exceeded", _traceback.format_exc())
    _fail("runtime", type(exc).__name__, _describe(exc, _generated_line(exc.__traceback__)), _traceback.format_exc())


def _compile(code):
    try:
        return compile(code, "<generated>", "exec")
    except SyntaxError as exc:
        msg = "%s: %s" % (type(exc).__name__, exc.msg)
        if exc.lineno is not None:
            msg += " (line %d)" % exc.lineno
        _fail("syntax", type(exc).__name__, msg, "".join(_traceback.format_exception_only(type(exc), exc)))
    except (ValueError, MemoryError) as exc:
        _fail("syntax", type(exc).__name__, "%s: %s" % (type(exc).__name__, exc))


def _run_python(code, namespace):
    compiled = _compile(code)
    try:
        exec(compiled, namespace)
    except SystemExit as exc:
        _fail("runtime", "SystemExit", "SystemExit: program called exit(%s)" % (exc.code,), _traceback.format_exc())
    except BaseException as exc:  # noqa: BLE001
        _runtime_failure(exc)


def _violation(what):
    try:
        _frame({"error": {"phase": "sandbox-violation", "type": "SandboxViolation", "message": "SandboxViolation: " + what, "traceback": ""}})
    finally:
        _os._exit(_VIOLATION_EXIT)


def _allowed_read_roots():
    roots = {_WORKDIR, _os.path.realpath(_os.path.dirname(_INPUT))}
    for p in [_sys.prefix, _sys.base_prefix, _sys.exec_prefix, _sys.base_exec_prefix] + list(_sys.path):
        if p and _os.path.isdir(p):
            roots.add(_os.path.realpath(p))
    for p in ("/usr/lib", "/usr/local/lib", "/usr/share/zoneinfo", "/dev/null", "/dev/urandom", "/proc/self"):
        roots.add(_os.path.realpath(p))
    return tuple(sorted(roots))


def _under(path, roots):
    for r in roots:
        if path == r or path.startswith(r.rstrip("/") + "/"):
            return True
    return False


_WRITE_FLAGS = _os.O_WRONLY | _os.O_RDWR | _os.O_CREAT | _os.O_TRUNC | _os.O_APPEND


def _install_guard():
    """Audit hook that ends the process on network, process or out-of-tree file access."""
    read_roots = _allowed_read_roots()
    write_roots = (_WORKDIR,)
    realpath = _os.path.realpath
    fspath = _os.fspath
    violation = _violation

    def resolve(p):
        if isinstance(p, int):
            return None
        try:
            p = fspath(p)
            if isinstance(p, bytes):
                p = p.decode("utf-8", "replace")
            return realpath(p)
        except Exception:  # noqa: BLE001
            return "<unresolvable>"

    def hook(event, args):
        if event.startswith("socket.") or event in ("urllib.Request", "http.client.connect", "ftplib.connect", "smtplib.connect"):
            violation("network access attempted (%s)" % event)
        elif event in ("subprocess.Popen", "os.system", "os.exec", "os.posix_spawn", "os.spawn", "os.fork", "os.forkpty", "pty.spawn", "os.startfile", "ctypes.dlopen", "os.kill", "os.killpg"):
            violation("process or native access attempted (%s)" % event)
        elif event == "open":
            path = resolve(args[0])
            if path is None:
                return
            mode = args[1] or "r"
            flags = args[2] if len(args) > 2 and isinstance(args[2], int) else 0
            writing = any(c in str(mode) for c in "wax+") or bool(flags & _WRITE_FLAGS)
            if writing and not _under(path, write_roots):
                violation("write outside the working directory: %s" % path)
            if not writing and not _under(path, read_roots):
                violation("read outside the working directory: %s" % path)
        elif event in ("os.remove", "os.rename", "os.rmdir", "os.mkdir", "os.chmod", "os.chown", "os.symlink", "os.link", "os.truncate", "os.utime", "shutil.rmtree", "shutil.copyfile", "shutil.move"):
            for a in args:
                if isinstance(a, (str, bytes)) or hasattr(a, "__fspath__"):
                    path = resolve(a)
                    if path is not None and not _under(path, write_roots):
                        violation("filesystem change outside the working directory: %s" % path)
        elif event in ("os.listdir", "os.scandir", "glob.glob"):
            path = resolve(args[0] if args and args[0] is not None else ".")
            if path is not None and not _under(path, read_roots):
                violation("directory listing outside the working directory: %s" % path)

    _sys.addaudithook(hook)


def _load_input():
    with open(_INPUT, "r", encoding="utf-8") as fh:
        return _json.load(fh)
