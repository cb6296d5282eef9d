"""Command-line driver.

Verbs: `corpus make`, `train --loss ...`, `eval single`, `eval sequential`,
`eval replay`, `serve`.  Exit codes: 0 ok, 2 config error, 3 missing
artifact, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .engines import NumericalError
from .harness import (
    TRAINABLE,
    ConfigError,
    ExperimentConfig,
    MissingArtifactError,
    make_corpus,
    run_single_edit_experiment,
    run_sequential_experiment,
    train_engine,
)
from .phantom import CaseIOError, MissingMemberError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_NUMERICAL = 4


def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", help="override the config output directory")


def _load_config(args) -> ExperimentConfig:
    overrides = {"seed": args.seed, "out_dir": args.out}
    if args.config:
        return ExperimentConfig.from_json(args.config, **overrides)
    return ExperimentConfig(**{k: v for k, v in overrides.items() if v is not None})


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="voxeledit",
        description="Scribble-driven editing of sparse volumetric segmentations",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    corpus = sub.add_parser("corpus", help="synthetic corpus management")
    corpus_sub = corpus.add_subparsers(dest="corpus_command", required=True)
    mk = corpus_sub.add_parser("make", help="generate a train/test corpus")
    _common_flags(mk)
    mk.add_argument("--force", action="store_true", help="overwrite a non-empty corpus dir")

    tr = sub.add_parser("train", help="train an editing engine")
    _common_flags(tr)
    tr.add_argument("--loss", required=True, choices=TRAINABLE)

    ev = sub.add_parser("eval", help="run an evaluation experiment")
    ev_sub = ev.add_subparsers(dest="eval_command", required=True)
    single = ev_sub.add_parser("single", help="single-edit comparison table")
    _common_flags(single)
    seq = ev_sub.add_parser("sequential", help="sequential-editing curves")
    _common_flags(seq)
    rp = ev_sub.add_parser("replay", help="replay a recorded session log")
    _common_flags(rp)
    rp.add_argument("--log", required=True, help="session scribble log JSON")
    rp.add_argument("--case", help="case bundle directory (defaults to the log's)")

    srv = sub.add_parser("serve", help="run the interactive editing service")
    srv.add_argument("--host", default=os.environ.get("VOXELEDIT_HOST", "127.0.0.1"))
    srv.add_argument("--port", type=int, default=int(os.environ.get("VOXELEDIT_PORT", "8008")))
    srv.add_argument("--case-dir", default=os.environ.get("VOXELEDIT_CASE_DIR"))
    srv.add_argument("--ckpt-dir", default=os.environ.get("VOXELEDIT_CKPT_DIR"))
    srv.add_argument("--frontend-dir", default=os.environ.get("VOXELEDIT_FRONTEND_DIR"))
    srv.add_argument("--session-dir", default=os.environ.get("VOXELEDIT_SESSION_DIR"))
    return parser


def _cmd_corpus_make(args) -> int:
    config = _load_config(args)
    split = make_corpus(config, force=args.force)
    print(json.dumps({"corpus": config.corpus_dir,
                      "n_train": len(split["train"]),
                      "n_test": len(split["test"])}))
    return EXIT_OK


def _cmd_train(args) -> int:
    config = _load_config(args)
    ckpt = train_engine(config, args.loss)
    print(json.dumps({"checkpoint": ckpt}))
    return EXIT_OK


def _cmd_eval_single(args) -> int:
    config = _load_config(args)
    results = run_single_edit_experiment(config)
    print(json.dumps({name: rep.to_json() for name, rep in results.items()},
                     sort_keys=True, indent=1))
    return EXIT_OK


def _cmd_eval_sequential(args) -> int:
    config = _load_config(args)
    run_sequential_experiment(config)
    print(json.dumps({"report": os.path.join(config.report_dir, "sequential.csv")}))
    return EXIT_OK


def _cmd_eval_replay(args) -> int:
    from .service import replay_session_log

    config = _load_config(args)
    result = replay_session_log(args.log, case_dir=args.case,
                                checkpoint_dir=config.checkpoint_dir)
    print(json.dumps(result, sort_keys=True, indent=1))
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    if not args.case_dir:
        raise ConfigError("serve requires --case-dir (or VOXELEDIT_CASE_DIR)")
    app = create_app(
        case_dir=args.case_dir,
        checkpoint_dir=args.ckpt_dir,
        frontend_dir=args.frontend_dir,
        session_dir=args.session_dir,
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "corpus":
            return _cmd_corpus_make(args)
        if args.command == "train":
            return _cmd_train(args)
        if args.command == "eval":
            if args.eval_command == "single":
                return _cmd_eval_single(args)
            if args.eval_command == "sequential":
                return _cmd_eval_sequential(args)
            return _cmd_eval_replay(args)
        if args.command == "serve":
            return _cmd_serve(args)
        parser.error(f"unknown command {args.command}")
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (MissingArtifactError, MissingMemberError) as e:
        print(f"missing artifact: {e}", file=sys.stderr)
        return EXIT_MISSING
    except FileNotFoundError as e:
        print(f"missing artifact: {e}", file=sys.stderr)
        return EXIT_MISSING
    except CaseIOError as e:
        print(f"corrupt artifact ({e.code}): {e}", file=sys.stderr)
        return EXIT_MISSING
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
