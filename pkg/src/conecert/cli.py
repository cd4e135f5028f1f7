"""Command-line front end: catalog browsing, cone queries on element
files, partition-of-unity solving and checking, coincidence probes, and
a content-addressed artifact trail for every verdict.

Exit codes follow the scripting contract: 0 for a definitive verdict
(positive, not-positive, certified, refuted, valid, invalid), 2 when the
tools decline to decide (search miss, no refutation found), 1 for usage
or input errors.  An absent certificate is never reported as
non-membership, and an absent refutation is never reported as
membership -- those outcomes exit with 2 and say "undecided".
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .catalog import UnknownSystemError, system_from_name
from .config import RunConfig, load_config
from .linalg import ShapeError
from .partition import (
    PartitionCertificate,
    PartitionInstance,
    random_partition_instance,
    solve_partition,
    verify_partition,
)
from .store import CertificateStore
from .tensors import (
    MaxCertificate,
    OuterEvidence,
    TensorElement,
    max_inner_nuclear_factor,
    max_inner_search,
    max_outer_refute,
    min_positive,
)
from .entangled import coincidence_probe

DEFINITIVE, ERROR, UNDECIDED = 0, 1, 2

CATALOG_TOKENS = [
    ("W:n,k", "equal block sums in l^inf_{nk}", "W:2,2"),
    ("E:n", "equal diagonal entries in M_n", "E:3"),
    ("U:n", "tied extreme diagonal in M_n", "U:2"),
    ("F:n", "balanced half-traces in M_{2n}", "F:2"),
    ("Linf:m", "diagonal algebra l^inf_m", "Linf:4"),
    ("Mat:d", "full matrix algebra M_d", "Mat:3"),
    ("Alg:d1,d2,...", "block algebra M_d1 + M_d2 + ...", "Alg:2,2"),
]


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="conecert", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="key=value config file (or set CONECERT_CONFIG)")
    parser.add_argument("--out", help="artifact directory (overrides config)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_cat = sub.add_parser("catalog", help="list systems or show one")
    cat_sub = p_cat.add_subparsers(dest="action", required=True)
    cat_sub.add_parser("list", help="name grammar with examples")
    p_info = cat_sub.add_parser("info", help="dimensions of a named system")
    p_info.add_argument("name")

    p_cone = sub.add_parser("cone", help="cone queries on a tensor element file")
    p_cone.add_argument("file", help="JSON tensor element")
    p_cone.add_argument(
        "--mode", required=True, choices=["min", "max-inner", "max-outer"]
    )

    p_pou = sub.add_parser("pou", help="matrix partitions of unity")
    pou_sub = p_pou.add_subparsers(dest="action", required=True)
    p_solve = pou_sub.add_parser("solve", help="solve an instance file or a random one")
    p_solve.add_argument("instance", nargs="?", help="JSON instance file")
    p_solve.add_argument("--random", action="store_true", help="generate the instance")
    p_solve.add_argument("--m", type=int, default=2, help="number of parts")
    p_solve.add_argument("--dims", default="2", help="ambient block sizes, e.g. 2,1")
    p_solve.add_argument("--seed", type=int, help="seed for --random")
    p_solve.add_argument("--margin", type=float, default=0.1)
    p_verify = pou_sub.add_parser("verify", help="check a certificate against an instance")
    p_verify.add_argument("instance")
    p_verify.add_argument("certificate")

    p_probe = sub.add_parser("probe", help="min/max coincidence sampling")
    p_probe.add_argument("left")
    p_probe.add_argument("right")
    p_probe.add_argument("--levels", default="1,2")
    p_probe.add_argument("--samples", type=int)
    p_probe.add_argument("--seed", type=int)
    return parser


def _load_json(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _store(cfg: RunConfig, out_override) -> CertificateStore:
    return CertificateStore(out_override or cfg.out_dir)


# ---------------------------------------------------------------------------
# subcommands


def cmd_catalog(args, cfg) -> int:
    if args.action == "list":
        for token, desc, example in CATALOG_TOKENS:
            sysx = system_from_name(example)
            print(f"{token:<16} {desc}  (e.g. {example}: dim {sysx.dim})")
        return DEFINITIVE
    sysx = system_from_name(args.name)
    amb = "+".join(str(d) for d in sysx.ambient.dims)
    print(f"name: {sysx.name}")
    print(f"dim: {sysx.dim}")
    print(f"ambient blocks: {amb} (total {sysx.ambient.total})")
    print(f"full algebra: {'yes' if sysx.is_full_algebra else 'no'}")
    return DEFINITIVE


def cmd_cone(args, cfg: RunConfig) -> int:
    out = _store(cfg, args.out)
    u = TensorElement.from_json_obj(_load_json(args.file))
    artifact = {
        "command": "cone",
        "mode": args.mode,
        "element": u.to_json_obj(),
        "config": cfg.to_dict(),
    }

    if args.mode == "min":
        verdict = min_positive(u)
        artifact["verdict"] = "positive" if verdict.positive else "not-positive"
        artifact["min_eig"] = verdict.min_eig
        code = DEFINITIVE

    elif args.mode == "max-inner":
        if u.right.is_full_algebra:
            outcome = max_inner_nuclear_factor(u)
            if outcome.status == "member":
                artifact["verdict"] = "certified"
                artifact["eps"] = outcome.certificate.eps
                artifact["certificate"] = outcome.certificate.to_json_obj()
                code = DEFINITIVE
            else:
                artifact["verdict"] = "not-positive"
                artifact["min_eig"] = outcome.report.get("min_eig")
                code = DEFINITIVE
        else:
            outcome = max_inner_search(
                u, eps_schedule=cfg.eps_schedule, seed=cfg.seed, tol_cert=cfg.tol_cert
            )
            if outcome.status == "certified":
                artifact["verdict"] = "certified"
                artifact["eps"] = outcome.certificate.eps
                artifact["certificate"] = outcome.certificate.to_json_obj()
                code = DEFINITIVE
            else:
                # a missed search decides nothing
                artifact["verdict"] = "undecided"
                artifact["search_status"] = outcome.status
                code = UNDECIDED

    else:  # max-outer
        outcome = max_outer_refute(u)
        if outcome.status == "refuted":
            artifact["verdict"] = f"refuted({u.level})"
            artifact["value"] = outcome.value
            artifact["evidence"] = outcome.evidence.to_json_obj()
            code = DEFINITIVE
        else:
            # no refutation found is not a membership verdict
            artifact["verdict"] = "undecided"
            artifact["refuter_value"] = outcome.value
            code = UNDECIDED

    key = out.put("cone", artifact)
    print(f"verdict: {artifact['verdict']}")
    print(f"artifact: {out.path('cone', key)}")
    return code


def cmd_pou(args, cfg: RunConfig) -> int:
    if args.action == "solve":
        out = _store(cfg, args.out)
        seed = cfg.seed if args.seed is None else args.seed
        if args.random:
            dims = [int(t) for t in args.dims.split(",") if t.strip()]
            rng = np.random.default_rng(seed)
            inst = random_partition_instance(rng, args.m, dims, margin=args.margin)
        elif args.instance:
            inst = PartitionInstance.from_json_obj(_load_json(args.instance))
        else:
            raise CliError("pou solve needs an instance file or --random")
        cert = solve_partition(inst)
        check = verify_partition(inst, cert)
        if not check.ok:
            print(f"solver output failed verification: {', '.join(check.reasons)}")
            return ERROR
        artifact = {
            "command": "pou",
            "seed": seed,
            "instance": inst.to_json_obj(),
            "certificate": cert.to_json_obj(),
            "eps": cert.eps,
            "config": cfg.to_dict(),
        }
        key = out.put("pou", artifact)
        print(f"verdict: valid (eps={cert.eps:g})")
        print(f"artifact: {out.path('pou', key)}")
        return DEFINITIVE

    inst = PartitionInstance.from_json_obj(_load_json(args.instance))
    cert_obj = _load_json(args.certificate)
    if "certificate" in cert_obj:
        cert_obj = cert_obj["certificate"]
    cert = PartitionCertificate.from_json_obj(cert_obj)
    check = verify_partition(inst, cert)
    if check.ok:
        print("verdict: valid")
    else:
        print(f"verdict: invalid({','.join(check.reasons)})")
    return DEFINITIVE


def cmd_probe(args, cfg: RunConfig) -> int:
    out = _store(cfg, args.out)
    left = system_from_name(args.left)
    right = system_from_name(args.right)
    levels = tuple(int(t) for t in args.levels.split(",") if t.strip())
    samples = cfg.samples if args.samples is None else args.samples
    seed = cfg.seed if args.seed is None else args.seed
    report = coincidence_probe(left, right, levels=levels, samples=samples, seed=seed)
    artifact = {
        "command": "probe",
        "report": report.to_json_obj(),
        "config": cfg.to_dict(),
    }
    key = out.put("probe", artifact)
    c = report.counts
    print(
        f"certified: {c['certified']}  refuted: {c['refuted']}  "
        f"undecided: {c['undecided']}"
    )
    print(f"artifact: {out.path('probe', key)}")
    return DEFINITIVE


# ---------------------------------------------------------------------------
# artifact re-verification hooks (store consumers pass these to get())


def reverify_cone(obj) -> bool:
    u = TensorElement.from_json_obj(obj["element"])
    if "certificate" in obj:
        cert = MaxCertificate.from_json_obj(obj["certificate"])
        return cert.verify(u).ok
    if "evidence" in obj:
        ok, _ = OuterEvidence.from_json_obj(obj["evidence"]).verify(u.flatten())
        return ok
    if obj.get("mode") == "min":
        return (obj["verdict"] == "positive") == bool(min_positive(u))
    return True


def reverify_pou(obj) -> bool:
    inst = PartitionInstance.from_json_obj(obj["instance"])
    cert = PartitionCertificate.from_json_obj(obj["certificate"])
    return bool(verify_partition(inst, cert))


def reverify_probe(obj) -> bool:
    rep = obj["report"]
    tallied = {"certified": 0, "refuted": 0, "undecided": 0}
    for rec in rep["records"]:
        tallied[rec["status"]] += 1
    return tallied == rep["counts"]


REVERIFIERS = {"cone": reverify_cone, "pou": reverify_pou, "probe": reverify_probe}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = load_config(args.config)
        if args.command == "catalog":
            return cmd_catalog(args, cfg)
        if args.command == "cone":
            return cmd_cone(args, cfg)
        if args.command == "pou":
            return cmd_pou(args, cfg)
        return cmd_probe(args, cfg)
    except CliError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return ERROR
    except (UnknownSystemError, ShapeError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ERROR


if __name__ == "__main__":
    sys.exit(main())
