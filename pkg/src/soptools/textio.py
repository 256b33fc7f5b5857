"""Plain-text formats: matrices, possibilistic tables, CSV tables and run manifests.

All writers use LF line endings and ``repr`` floats so files are bit-exact
functions of their contents.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, DomainError


# -- matrices ------------------------------------------------------------------------

def format_number(z):
    z = complex(z)
    if z.imag == 0:
        return repr(z.real)
    sign = "-" if z.imag < 0 else "+"
    return f"{z.real!r}{sign}{abs(z.imag)!r}j"


def parse_matrix(text):
    """Row-major whitespace-separated matrix; entries may be ``re+imj``."""
    rows = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            rows.append([complex(tok) for tok in line.split()])
        except ValueError as exc:
            raise ConfigError(f"bad matrix entry in line {line!r}") from exc
    if not rows or len({len(r) for r in rows}) != 1:
        raise ConfigError("matrix rows must be non-empty and of equal length")
    m = np.array(rows)
    return m.real.copy() if np.all(m.imag == 0) else m


def read_matrix(path):
    return parse_matrix(Path(path).read_text())


def format_matrix(m):
    m = np.atleast_2d(m)
    return "".join(" ".join(format_number(v) for v in row) + "\n" for row in m)


def write_matrix(path, m):
    Path(path).write_text(format_matrix(m), newline="\n")


# -- possibilistic tables --------------------------------------------------------------

def parse_kernel(text, states=None):
    """Lines ``next current value``; missing pairs are 0. Returns ``(states, table)``
    with ``table[current, next]``."""
    entries = []
    seen = [] if states is None else list(states)
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ConfigError(f"kernel line needs 'next current value': {line!r}")
        nxt, cur, val = parts
        for s in (cur, nxt):
            if s not in seen:
                if states is not None:
                    raise ConfigError(f"unknown state {s!r}")
                seen.append(s)
        entries.append((cur, nxt, float(val)))
    pos = {s: i for i, s in enumerate(seen)}
    table = np.zeros((len(seen), len(seen)))
    for cur, nxt, val in entries:
        table[pos[cur], pos[nxt]] = val
    return tuple(seen), table


def parse_graph(text):
    """Graph tables.

    ``domain NODE v1 v2 ...`` declares values, ``parents NODE P1 P2 ...``
    declares parents, and ``NODE=value P1=a,P2=b alpha`` stores an entry
    (``-`` for a node without parents). Returns ``(parents, domains, tables)``.
    """
    parents, domains, tables = {}, {}, {}
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "domain":
            domains[parts[1]] = tuple(parts[2:])
        elif parts[0] == "parents":
            parents[parts[1]] = tuple(parts[2:])
        else:
            if len(parts) != 3 or "=" not in parts[0]:
                raise ConfigError(f"graph entry needs 'node=value parent-config alpha': {line!r}")
            node, val = parts[0].split("=", 1)
            pv = {}
            if parts[1] != "-":
                for item in parts[1].split(","):
                    k, _, v = item.partition("=")
                    pv[k] = v
            order = parents.get(node, ())
            if set(pv) != set(order):
                raise ConfigError(f"parent configuration of {node!r} must name {order}")
            tables.setdefault(node, {})[(val, tuple(pv[p] for p in order))] = float(parts[2])
    for n in domains:
        parents.setdefault(n, ())
    return parents, domains, tables


# -- CSV -----------------------------------------------------------------------------

def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


def write_csv(path, header, rows):
    Path(path).write_text(csv_text(header, rows), newline="\n")


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


TRACE_COLUMNS = ("iteration", "avg_reward", "q_error", "avg_policy")


def trace_rows(trace):
    return [(int(i), float(r), float(q), float(p)) for i, r, q, p in
            zip(trace.iteration, trace.avg_reward, trace.q_error, trace.avg_policy)]


def read_trace(path):
    header, rows = read_csv(path)
    if tuple(header) != TRACE_COLUMNS:
        raise DomainError(f"unexpected trace header {header}")
    cols = list(zip(*rows)) if rows else [()] * 4
    return {
        "iteration": np.array(cols[0], dtype=int),
        "avg_reward": np.array(cols[1], dtype=float),
        "q_error": np.array(cols[2], dtype=float),
        "avg_policy": np.array(cols[3], dtype=float),
    }


# -- manifests ------------------------------------------------------------------------

def sha256_file(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out_dir, manifest):
    text = json.dumps(manifest, sort_keys=True, indent=2) + "\n"
    Path(out_dir, "manifest.json").write_text(text, newline="\n")


def load_manifest(out_dir, verify=True):
    """Read ``manifest.json`` and, with ``verify``, check every file checksum."""
    m = json.loads(Path(out_dir, "manifest.json").read_text())
    if verify:
        for name, digest in m["files"].items():
            if sha256_file(Path(out_dir, name)) != digest:
                raise DomainError(f"checksum mismatch for {name}")
    return m
