"""
Command-line entry point: ``social-radar <command>``.

Exit codes: 0 on success, 2 for configuration or input errors, 3 when an experiment
trial failed or a solver broke down.
"""
import argparse
import json
import logging
import sys
from dataclasses import replace
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from social_radar import __version__
from social_radar.config import load_config
from social_radar.dynamics import (
    DynamicsModel,
    EstimatorConfig,
    collect_dataset,
    gossip_mean_matrix,
    simulate,
)
from social_radar.exceptions import SocialRadarError
from social_radar.experiment import run_experiment
from social_radar.graph import (
    NetworkInstance,
    NetworkTopology,
    build_trust_matrix,
    generate_instance,
    int_seed,
    network_from_dict,
    place_stubborn,
    placement_from_dict,
    relative_trust_of,
    validate_trust_matrix,
)
from social_radar.identify import (
    ExpanderSpec,
    check_rank_full_rows,
    check_spark_partial_rows,
    is_expander,
    stacked_data_matrix,
    theorem1_report,
)
from social_radar.io import (
    load_dataset,
    load_instance,
    save_dataset,
    save_instance,
    save_objective_trace,
    save_results_csv,
    save_trace_csv,
    write_json,
)
from social_radar.metrics import nmse, support_error
from social_radar.recovery import (
    RecoveryMode,
    RecoveryProblem,
    SolverConfig,
    brute_force_l0,
    full_offdiagonal_mask,
    recover,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_FAILURE = 3


def _emit(payload: Dict[str, Any], out: Optional[str]) -> None:
    if out:
        write_json(payload, out)
    else:
        print(json.dumps(payload, indent=2))


def cmd_generate(args: argparse.Namespace) -> int:
    placement = placement_from_dict(
        {"mode": args.placement, "d": args.d}
        if args.placement == "d_regular"
        else {"mode": args.placement, "p_s": args.p_s}
    )
    if args.edge_list:
        topology_seq, support_seq, weight_seq = np.random.SeedSequence(
            int_seed(args.seed)
        ).spawn(3)
        topology = NetworkTopology.from_edge_list(args.edge_list, n_ord=args.n_ord)
        support = place_stubborn(topology.n_ord, args.n_s, placement, seed=support_seq)
        trust = build_trust_matrix(topology, support, seed=weight_seq)
        instance = NetworkInstance(topology=topology, support=support, trust=trust)
    else:
        network = network_from_dict(json.loads(args.network))
        n_ord = args.n_ord if args.n_ord is not None else 60
        instance = generate_instance(network, placement, n_ord, args.n_s, seed=args.seed)
    report = validate_trust_matrix(instance.trust, instance.topology, instance.support)
    if not report.passed:
        logger.warning("Generated instance fails validation: %s", report)
    save_instance(instance, args.out)
    logger.info(
        "Wrote %s: n_ord=%d n_s=%d, spectral radius of D %.4f",
        args.out,
        instance.trust.n_ord,
        instance.trust.n_s,
        report.spectral_radius_D,
    )
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    trust = load_instance(args.instance).trust
    rng = np.random.default_rng(args.seed)
    z0 = rng.standard_normal(trust.n_s)
    y0 = rng.standard_normal(trust.n_ord)
    trace = simulate(
        trust,
        z0,
        y0,
        args.steps,
        model=args.dynamics,
        sigma=args.sigma,
        seed=rng,
        gossip_weight=args.gossip_weight,
    )
    save_trace_csv(trace, args.out)
    logger.info("Wrote %d instants to %s", trace.times.size, args.out)
    return EXIT_OK


def cmd_collect(args: argparse.Namespace) -> int:
    trust = load_instance(args.instance).trust
    estimator = EstimatorConfig(
        horizon=args.horizon,
        n_samples=args.n_samples,
        burn_in=args.burn_in,
        gossip_weight=args.gossip_weight,
    )
    K = args.K if args.K is not None else 2 * trust.n_s
    data = collect_dataset(
        trust,
        K,
        estimator=estimator,
        model=args.dynamics,
        sigma=args.sigma,
        seed=args.seed,
        n_jobs=args.n_jobs,
    )
    save_dataset(data, args.out)
    logger.info("Wrote %d discussions to %s", data.K, args.out)
    return EXIT_OK


def cmd_recover(args: argparse.Namespace) -> int:
    data = load_dataset(args.data)
    instance = load_instance(args.instance) if args.instance else None
    mode = RecoveryMode(args.mode)
    if mode is RecoveryMode.FULL_SUPPORT:
        if instance is None:
            raise SocialRadarError("Full-support recovery needs --instance for the support")
        support_D, support_B = instance.topology.adjacency(), instance.support.mask()
    else:
        support_D = full_offdiagonal_mask(data.n_ord)
        support_B = (
            instance.support.mask() if instance and not args.ignore_placement else None
        )
    problem = RecoveryProblem.from_dataset(
        data, support_D=support_D, support_B=support_B, c=args.c, mode=mode
    )
    if args.brute_force:
        result = brute_force_l0(problem, k_max=args.k_max)
    else:
        config = SolverConfig(
            lam=args.lam,
            gamma=args.gamma,
            step="backtracking" if args.backtracking else None,
            max_iters=args.max_iters,
            tol=args.tol,
        )
        result = recover(problem, config)
    payload = result.to_dict()
    if instance is not None:
        expected = (
            gossip_mean_matrix(instance.trust, args.gossip_weight)
            if data.model is DynamicsModel.BROADCAST_GOSSIP
            else instance.trust
        )
        truth = relative_trust_of(expected, args.c)
        payload["nmse_D"] = nmse(result.D, truth.D)
        payload["nmse_B"] = nmse(result.B, truth.B)
        payload["support_error"] = support_error(result.D, truth.D, support=support_D)
        logger.info("NMSE(D') = %.3e, NMSE(B') = %.3e", payload["nmse_D"], payload["nmse_B"])
    if args.out:
        write_json(payload, args.out)
    else:
        print(json.dumps(payload))
    if args.trace:
        save_objective_trace(result, args.trace)
    return EXIT_OK


def cmd_check(args: argparse.Namespace) -> int:
    if args.what == "thm1":
        report = theorem1_report(args.alpha, args.d, args.b_min, args.b_max, args.n_i)
        _emit(report.to_dict(), args.out)
        return EXIT_OK
    if not args.instance:
        raise SocialRadarError(f"check --what {args.what} needs --instance")
    instance = load_instance(args.instance)

    if args.what == "expander":
        verdict = is_expander(instance.support, args.alpha, args.delta)
        payload: Dict[str, Any] = {
            "holds": verdict.holds,
            "witness": list(verdict.witness) if verdict.witness else None,
            "edges": verdict.edges,
            "neighbors": verdict.neighbors,
        }
        relative = relative_trust_of(instance.trust)
        if relative.B.any():
            spec = ExpanderSpec.from_matrix(relative.B.T, args.alpha, args.delta)
            payload["spec"] = {
                "d_l": spec.d_l,
                "d_u": spec.d_u,
                "a_min": spec.a_min,
                "a_max": spec.a_max,
                "lower_constant": spec.lower_constant,
                "upper_constant": spec.upper_constant,
            }
        _emit(payload, args.out)
        return EXIT_OK

    if not args.data:
        raise SocialRadarError(f"check --what {args.what} needs --in with a dataset")
    data = load_dataset(args.data)
    A_tilde = stacked_data_matrix(data.Y_hat, data.Z)
    support_B = instance.support.mask()
    if args.what == "rank":
        verdicts = check_rank_full_rows(A_tilde, instance.topology.adjacency(), support_B)
    else:
        sparsity = instance.topology.adjacency().sum(axis=1)
        if args.k is not None:
            sparsity = np.full(data.n_ord, args.k)
        verdicts = check_spark_partial_rows(
            A_tilde, full_offdiagonal_mask(data.n_ord), support_B, sparsity.tolist()
        )
    _emit(
        {
            "what": args.what,
            "holds": bool(verdicts.all()),
            "failing_rows": np.flatnonzero(~verdicts).tolist(),
        },
        args.out,
    )
    return EXIT_OK


def cmd_experiment(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    if args.n_jobs is not None:
        config = replace(config, n_jobs=args.n_jobs)
    table = run_experiment(config)
    save_results_csv(table.to_frame(), args.out)
    if args.summary:
        write_json({"name": config.name, "points": table.summary_records()}, args.summary)
    logger.info("Wrote %d rows to %s", len(table), args.out)
    return EXIT_FAILURE if table.failed else EXIT_OK


def _add_dynamics_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--dynamics",
        choices=[model.value for model in DynamicsModel],
        default=DynamicsModel.DETERMINISTIC.value,
    )
    parser.add_argument("--sigma", type=float, default=0.0)
    parser.add_argument("--gossip-weight", type=float, default=0.5)
    parser.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="social-radar",
        description="Infer trust networks from opinion steady states excited by stubborn agents.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true")
    verbosity.add_argument("-q", "--quiet", action="store_true")
    commands = parser.add_subparsers(dest="command", required=True)

    generate = commands.add_parser("generate", help="generate a network instance")
    generate.add_argument("--network", default='{"model": "er", "p": 0.1}')
    generate.add_argument("--edge-list", help="ingest an 'i j [weight]' edge list instead")
    generate.add_argument("--placement", choices=["d_regular", "er_bipartite"], default="d_regular")
    generate.add_argument("--d", type=int, default=5)
    generate.add_argument("--p-s", type=float, default=0.1)
    generate.add_argument(
        "--n-ord", type=int, help="ordinary agents (default 60, or the edge-list size)"
    )
    generate.add_argument("--n-s", type=int, default=20)
    generate.add_argument("--seed", type=int, default=0)
    generate.add_argument("--out", required=True)
    generate.set_defaults(handler=cmd_generate)

    simulate_parser = commands.add_parser("simulate", help="simulate one discussion")
    simulate_parser.add_argument("--instance", required=True)
    simulate_parser.add_argument("--steps", type=int, default=1000)
    _add_dynamics_arguments(simulate_parser)
    simulate_parser.add_argument("--out", required=True)
    simulate_parser.set_defaults(handler=cmd_simulate)

    collect = commands.add_parser("collect", help="collect steady-state data")
    collect.add_argument("--instance", required=True)
    collect.add_argument("--K", type=int, help="number of discussions (default 2 n_s)")
    collect.add_argument("--horizon", type=int, default=10_000)
    collect.add_argument("--n-samples", type=int)
    collect.add_argument("--burn-in", type=int)
    collect.add_argument("--n-jobs", type=int, default=1)
    _add_dynamics_arguments(collect)
    collect.add_argument("--out", required=True)
    collect.set_defaults(handler=cmd_collect)

    recover_parser = commands.add_parser("recover", help="recover relative trust matrices")
    recover_parser.add_argument("--data", required=True)
    recover_parser.add_argument("--instance", help="ground truth for supports and scoring")
    recover_parser.add_argument(
        "--mode", choices=[mode.value for mode in RecoveryMode], default="sparse"
    )
    recover_parser.add_argument(
        "--ignore-placement",
        action="store_true",
        help="in sparse mode, do not restrict B to the stubborn placement of --instance",
    )
    recover_parser.add_argument("--c", type=float, default=0.0)
    recover_parser.add_argument(
        "--gossip-weight",
        type=float,
        default=0.5,
        help="broadcast weight used to score gossip data against its expected matrix",
    )
    recover_parser.add_argument("--lam", type=float)
    recover_parser.add_argument("--gamma", type=float, default=1e-3)
    recover_parser.add_argument("--max-iters", type=int, default=40_000)
    recover_parser.add_argument("--tol", type=float, default=1e-10)
    recover_parser.add_argument("--backtracking", action="store_true")
    recover_parser.add_argument("--brute-force", action="store_true")
    recover_parser.add_argument("--k-max", type=int)
    recover_parser.add_argument("--out")
    recover_parser.add_argument("--trace", help="CSV file for the objective trace")
    recover_parser.set_defaults(handler=cmd_recover)

    check = commands.add_parser("check", help="identifiability certificates")
    check.add_argument("--what", choices=["rank", "spark", "expander", "thm1"], required=True)
    check.add_argument("--in", dest="data", help="dataset JSON for rank/spark")
    check.add_argument("--instance", help="instance JSON with the supports")
    check.add_argument("--alpha", type=float, default=0.16)
    check.add_argument("--delta", type=float, default=0.75)
    check.add_argument("--d", type=int, default=5)
    check.add_argument("--k", type=int, help="row sparsity for the spark check")
    check.add_argument("--b-min", type=float)
    check.add_argument("--b-max", type=float)
    check.add_argument("--n-i", type=int)
    check.add_argument("--out")
    check.set_defaults(handler=cmd_check)

    experiment = commands.add_parser("experiment", help="run a Monte-Carlo sweep")
    experiment.add_argument("--config", required=True)
    experiment.add_argument("--out", required=True)
    experiment.add_argument("--summary", help="JSON file for per-point mean/stderr")
    experiment.add_argument("--n-jobs", type=int)
    experiment.set_defaults(handler=cmd_experiment)
    return parser


def _exit_code(exc: BaseException) -> int:
    return EXIT_FAILURE if isinstance(exc, ArithmeticError) else EXIT_INPUT


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    handler: Callable[[argparse.Namespace], int] = args.handler
    try:
        return handler(args)
    except SocialRadarError as exc:
        logger.error("%s", exc)
        return _exit_code(exc)
    except (OSError, json.JSONDecodeError) as exc:
        logger.error("%s", exc)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
