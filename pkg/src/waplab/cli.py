"""Command-line front end.

Subcommands: gen, diffract, autocorr, eberlein, decompose, certify, verify.

Exit codes: 0 success (all checks pass), 1 check failure, 2 usage or config error.
Settings come from an optional ``--config`` JSON file; flags override it.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import eberlein as eb
from . import models, spectra
from .averaging import VanHoveFamily
from .errors import WapLabError
from .io import dumps_comb, read_comb, to_jsonable
from .measures import Box, TestFunction

SUITES = ("product-law", "iterated", "hull", "nullness", "same-autocorr", "covariance",
          "vanhove-independence")

DEFAULT_MODELS = {
    "product-law": {"tag": "lattice", "a": 1.0},
    "iterated": {"tag": "lattice", "a": 1.0, "weight": 0.5},
    "hull": {"tag": "perturbedInteger"},
    "nullness": {"tag": "nullPair"},
    "same-autocorr": {"tag": "perturbedInteger"},
    "covariance": {"tag": "fibonacci"},
    "vanhove-independence": {"tag": "perturbedInteger"},
}


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# Parsing helpers


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_box(text, dim=None):
    """``"lo,hi"`` or ``"[lo,hi)"`` (cube in ``dim`` dimensions), or JSON ``[[lo, hi], ...]``."""
    if isinstance(text, Box):
        return text
    if isinstance(text, (list, tuple)):
        pairs = text
    else:
        s = str(text).strip().replace("\u2212", "-")
        if s.startswith("[["):
            pairs = json.loads(s)
        else:
            lo, hi = (float(v) for v in s.strip("[]()").split(","))
            pairs = [[lo, hi]] * (dim or 1)
    pairs = np.asarray(pairs, dtype=float)
    if pairs.ndim == 1:
        pairs = np.tile(pairs, (dim or 1, 1))
    return Box.from_pairs(pairs)


def parse_model(spec):
    """JSON object, path to a JSON file, or a bare tag (``fibonacci`` is an alias)."""
    if spec is None:
        return None
    if isinstance(spec, dict):
        return models.ModelDescriptor.from_dict(spec)
    s = str(spec).strip()
    if s.startswith("{"):
        return models.ModelDescriptor.from_dict(json.loads(s))
    if Path(s).is_file():
        return models.ModelDescriptor.from_dict(json.loads(Path(s).read_text()))
    return models.ModelDescriptor.from_dict({"tag": s})


def parse_family(spec, dim):
    """``centered``, ``centered:1.5``, ``drifting`` or a JSON family object."""
    if spec is None:
        return VanHoveFamily(dim=dim)
    if isinstance(spec, dict):
        return VanHoveFamily.from_config(spec, dim)
    s = str(spec)
    if s.startswith("{"):
        return VanHoveFamily.from_config(json.loads(s), dim)
    kind, _, step = s.partition(":")
    return VanHoveFamily(kind=kind, step=float(step or 1.0), dim=dim)


def parse_ns(spec):
    if spec is None:
        return [10_000]
    if isinstance(spec, int):
        ns = [spec]
    elif isinstance(spec, list):
        ns = [int(v) for v in spec]
    else:
        ns = [int(float(v)) for v in str(spec).split(",")]
    if any(n < 2 for n in ns):
        raise UsageError("n must be >= 2")
    return ns


def parse_freqs(spec, model, dim):
    """``dual[:normBound[:internalCutoff]]``, ``grid:lo:hi:step`` or a list ``k1,k2,...``."""
    if spec is None:
        spec = "dual"
    if isinstance(spec, list):
        return [tuple(np.atleast_1d(np.asarray(k, dtype=float))) for k in spec]
    s = str(spec).strip()
    if s.startswith("dual"):
        if model is None:
            raise UsageError("dual frequencies need --model")
        parts = s.split(":")[1:]
        nb = float(parts[0]) if parts else 3.0
        ic = float(parts[1]) if len(parts) > 1 else 0.5
        return models.dual_frequencies(model, nb, ic)
    if s.startswith("grid"):
        _, lo, hi, step = s.split(":")
        vals = np.arange(float(lo), float(hi) + float(step) / 2, float(step))
        return [(float(v),) for v in vals]
    if s.startswith("["):
        return parse_freqs(json.loads(s), model, dim)
    if not s:
        return []
    return [(float(v),) for v in s.split(",")]


def _patch_for(args, ns, dim):
    if args.get("patch"):
        return parse_box(args["patch"], dim)
    n = max(ns)
    half = 2 * n + 100
    return Box.cube(-half, half, dim)


def _load_comb(args, key_in="in", key_model="model", ns=(10_000,), default_model=None):
    if args.get(key_in):
        comb, _ = read_comb(args[key_in])
        return comb, parse_model(args.get(key_model))
    model = parse_model(args.get(key_model) or default_model)
    if model is None:
        raise UsageError(f"need --{key_in} or --{key_model}")
    return model.build(_patch_for(args, ns, model.dim)), model


def _emit(text, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _json(obj):
    return json.dumps(to_jsonable(obj), indent=2) + "\n"


# --------------------------------------------------------------------------
# Commands


def cmd_gen(args):
    model_dict = {"tag": args["tag"]}
    for kv in args.get("params") or []:
        if "=" not in kv:
            raise UsageError(f"expected key=value, got {kv!r}")
        k, v = kv.split("=", 1)
        model_dict[k] = _parse_value(v)
    if isinstance(args.get("model"), (dict, str)) and args.get("tag") is None:
        model_dict = args["model"]
    patch = model_dict.pop("patch", None) or args.get("patch")
    model = models.ModelDescriptor.from_dict(model_dict)
    if patch is None:
        raise UsageError("gen needs a patch (patch=lo,hi or --patch)")
    box = parse_box(patch, model.dim)
    mu = model.build(box)
    _emit(dumps_comb(mu), args.get("out"))
    dens = float(abs(sum(mu.weights))) / box.volume if len(mu) else 0.0
    sys.stderr.write(f"atoms={len(mu)} density={dens!r}\n")
    return 0


def cmd_diffract(args):
    ns = parse_ns(args.get("n"))
    mu, model = _load_comb(args, ns=ns)
    fam = parse_family(args.get("family"), mu.dim)
    cands = parse_freqs(args.get("freqs"), model, mu.dim)
    if not cands:
        raise UsageError("empty candidate list")
    spec = spectra.diffraction_spectrum(mu, cands, fam, ns[-1], args.get("threshold"))
    _emit(spec.to_csv(mu.dim), args.get("out"))
    return 0


def _window(args, dim):
    return parse_box(args["window"], dim) if args.get("window") else eb.default_window(dim)


def cmd_autocorr(args):
    ns = parse_ns(args.get("n"))
    mu, _ = _load_comb(args, ns=ns)
    fam = parse_family(args.get("family"), mu.dim)
    res = eb.autocorrelation(mu, fam, ns[-1], _window(args, mu.dim))
    _emit(dumps_comb(res.comb, res.metadata()), args.get("out"))
    return 0


def cmd_eberlein(args):
    ns = parse_ns(args.get("n"))
    mu, _ = _load_comb(args, ns=ns)
    if args.get("in2") or args.get("model2"):
        nu, _ = _load_comb(args, "in2", "model2", ns=ns)
    else:
        nu = mu
    fam = parse_family(args.get("family"), mu.dim)
    fn = eb.eberlein_convolve_one_sided if args.get("one_sided") else eb.eberlein_convolve
    if args.get("one_sided") and not (args.get("in2") or args.get("model2")):
        # enlarge nu's patch so the untruncated side is available
        model = parse_model(args.get("model"))
        if model is not None:
            A = fam.box(ns[-1])
            need = eb.one_sided_support(A, _window(args, mu.dim))
            nu = model.build(Box(tuple(np.minimum(need.lo, mu.patch.lo)),
                                 tuple(np.maximum(need.hi, mu.patch.hi))))
    res = fn(mu, nu, fam, ns[-1], _window(args, mu.dim))
    _emit(dumps_comb(res.comb, res.metadata()), args.get("out"))
    return 0


def cmd_decompose(args):
    ns = parse_ns(args.get("n"))
    model = parse_model(args.get("model"))
    if model is None:
        raise UsageError("decompose needs --model")
    patch = _patch_for(args, ns, model.dim)
    dec = eb.eberlein_decompose(model, patch)
    out = args.get("out")
    summary = {"provenance": dec.provenance, "strongAtoms": len(dec.strong),
               "nullAtoms": len(dec.null), "patch": patch.to_pairs()}
    if out:
        Path(f"{out}.strong.jsonl").write_text(dumps_comb(dec.strong, {"part": "strong"}))
        Path(f"{out}.null.jsonl").write_text(dumps_comb(dec.null, {"part": "null"}))
        summary["files"] = [f"{out}.strong.jsonl", f"{out}.null.jsonl"]
    sys.stdout.write(_json(summary))
    return 0


def cmd_certify(args):
    ns = parse_ns(args.get("n"))
    mu, _ = _load_comb(args, ns=ns)
    rep = models.certify_point_set(mu, cutoff=args.get("cutoff"))
    _emit(_json(rep), args.get("out"))
    return 0


# --------------------------------------------------------------------------
# verify


def _check(name, report, passed=None):
    d = to_jsonable(report)
    if passed is None:
        passed = d.get("passed") if isinstance(d, dict) else bool(report)
    return {"name": name, "passed": bool(passed), "report": d}


def _suite(args):
    suite = args["suite"]
    ns = parse_ns(args.get("n"))
    n = ns[-1]
    tol = float(args.get("tol") or 1e-2)
    default = args.get("model") or DEFAULT_MODELS[suite]
    model = parse_model(default)
    patch = _patch_for(args, ns, model.dim)
    mu = read_comb(args["in"])[0] if args.get("in") else model.build(patch)
    fam = parse_family(args.get("family"), mu.dim)
    window = _window(args, mu.dim)
    checks = []
    params = {"suite": suite, "n": n, "tol": tol, "family": fam.to_config(),
              "window": window.to_pairs(), "model": model.to_dict()}

    if suite == "product-law":
        nu = parse_model(args["model2"]).build(patch) if args.get("model2") else mu
        ks = parse_freqs(args.get("freqs") or "dual", model, mu.dim)[:10]
        rep = eb.product_law_check(mu, nu, ks, fam, n, window, tol)
        checks.append(_check("product-law", rep))
    elif suite == "iterated":
        depth = int(args.get("depth") or 2)
        k = parse_freqs(args.get("freqs") or "1", model, mu.dim)[0]
        chain = eb.iterated_autocorrelation(mu, depth, fam, n, window)
        coeffs = [r.coefficient(k) for r in chain]
        for m in range(1, len(coeffs)):
            gap = abs(coeffs[m] - abs(coeffs[m - 1]) ** 2)
            gap0 = abs(coeffs[m] - abs(coeffs[0]) ** (2 ** m))
            checks.append(_check(f"level-{m}", {"coefficient": coeffs[m], "previous": coeffs[m - 1],
                                               "gap": gap, "gapToChain": gap0},
                                 gap < tol and gap0 < tol))
    elif suite == "hull":
        target = eb.eberlein_decompose(model, patch).strong if not args.get("model2") \
            else parse_model(args["model2"]).build(patch)
        tests = [TestFunction.tent(c) for c in (-2, -1, 0, 1, 2)]
        grid = (float(args.get("search_lo") or 100.0), float(n), float(args.get("pitch") or 1.0))
        rep = eb.hull_membership_check(mu, target, tests, tol, grid)
        checks.append(_check("hull-witness", rep, rep.passed))
    elif suite == "nullness":
        rep = eb.nullness_check(mu, TestFunction.tent(), fam, n, threshold=tol,
                                search=(0.0, min(200.0, n / 2)))
        checks.append(_check("mean-of-modulus", rep, rep.null))
        checks.append(_check("small-on-translate", {"witness": rep.witness}, rep.witness is not None))
    elif suite == "same-autocorr":
        nu = parse_model(args["model2"]).build(patch) if args.get("model2") \
            else eb.eberlein_decompose(model, patch).strong
        ks = parse_freqs(args.get("freqs") or "1,2,3", None, mu.dim)
        rep = eb.same_autocorrelation_check(mu, nu, fam, n, window, ks, tol=tol)
        checks.append(_check("same-autocorrelation", rep))
    elif suite == "covariance":
        if args.get("freqs"):
            ks = parse_freqs(args["freqs"], model, mu.dim)
        else:
            cands = [k for k in models.dual_frequencies(model, 3.0, 0.5) if k[0] > 0] \
                if model.tag in ("lattice", "crystal", "cps") else [(1.0,)]
            ints = [spectra.bragg_intensity(mu, k, fam, n) for k in cands]
            ks = [cands[int(np.argmax(ints))]]
        for k in ks:
            for t in (1.0, models.TAU):
                rep = spectra.covariance_check(mu, k, t, fam, n, tol)
                checks.append(_check(f"covariance k={k[0]:.6g} t={t:.6g}", rep))
    elif suite == "vanhove-independence":
        k = parse_freqs(args.get("freqs") or "1", model, mu.dim)[0]
        fams = {"centered": VanHoveFamily(dim=mu.dim), "centered-1.5": VanHoveFamily(step=1.5, dim=mu.dim),
                "drifting": VanHoveFamily("drifting", dim=mu.dim)}
        rep = eb.vanhove_independence_check(mu, k, fams, n, tol)
        checks.append(_check("vanhove-independence", rep))
    return {"params": params, "checks": checks, "passed": all(c["passed"] for c in checks)}


def cmd_verify(args):
    if args.get("suite") not in SUITES:
        raise UsageError(f"unknown suite {args.get('suite')!r}; expected one of {', '.join(SUITES)}")
    result = _suite(args)
    _emit(_json(result), args.get("out"))
    return 0 if result["passed"] else 1


COMMANDS = {"gen": cmd_gen, "diffract": cmd_diffract, "autocorr": cmd_autocorr,
            "eberlein": cmd_eberlein, "decompose": cmd_decompose, "certify": cmd_certify,
            "verify": cmd_verify}


def build_parser():
    p = argparse.ArgumentParser(prog="waplab", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="JSON file with default settings")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--model", help="model descriptor (JSON, file, or tag)")
        sp.add_argument("--in", dest="in", help="input comb file")
        sp.add_argument("--out", help="output path (default stdout)")
        sp.add_argument("--n", help="averaging index, or comma list")
        sp.add_argument("--family", help="centered[:step] | drifting | JSON object")
        sp.add_argument("--window", help="output window lo,hi or JSON pairs")
        sp.add_argument("--freqs", help="dual[:nb[:ic]] | grid:lo:hi:step | k1,k2,...")
        sp.add_argument("--tol", type=float)
        sp.add_argument("--patch", help="patch lo,hi or JSON pairs")

    g = sub.add_parser("gen", help="generate a model comb")
    g.add_argument("tag", nargs="?")
    g.add_argument("params", nargs="*", help="key=value model parameters (patch=lo,hi)")
    common(g)
    d = sub.add_parser("diffract", help="Bragg peaks as CSV")
    common(d)
    d.add_argument("--threshold", type=float)
    a = sub.add_parser("autocorr", help="autocorrelation on a window")
    common(a)
    e = sub.add_parser("eberlein", help="Eberlein convolution on a window")
    common(e)
    e.add_argument("--in2")
    e.add_argument("--model2")
    e.add_argument("--one-sided", dest="one_sided", action="store_true")
    dc = sub.add_parser("decompose", help="Eberlein decomposition of a model")
    common(dc)
    c = sub.add_parser("certify", help="point-set certification report")
    common(c)
    c.add_argument("--cutoff", type=float)
    v = sub.add_parser("verify", help="run a verification suite")
    common(v)
    v.add_argument("--suite", help=" | ".join(SUITES))
    v.add_argument("--model2")
    v.add_argument("--depth", type=int)
    return p


def main(argv=None):
    parser = build_parser()
    ns = parser.parse_args(argv)
    args = {}
    try:
        if ns.config:
            args.update(json.loads(Path(ns.config).read_text()))
        args.update({k: v for k, v in vars(ns).items() if v is not None and v != []})
        if ns.command == "gen" and args.get("tag") is None and not args.get("model"):
            raise UsageError("gen needs a model tag")
        if ns.command == "gen" and args.get("tag") is None:
            m = args["model"]
            m = json.loads(m) if isinstance(m, str) and m.strip().startswith("{") else m
            args["tag"] = m["tag"] if isinstance(m, dict) else m
            if isinstance(m, dict):
                args["params"] = [f"{k}={json.dumps(v)}" for k, v in m.items() if k != "tag"]
        return COMMANDS[ns.command](args)
    except (UsageError, WapLabError, ValueError, KeyError, OSError) as exc:
        sys.stderr.write(f"waplab {ns.command}: error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
