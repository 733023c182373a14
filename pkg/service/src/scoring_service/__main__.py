"""Run the scoring service: python -m scoring_service --port 8731"""

from __future__ import annotations

import argparse

import uvicorn

from .app import create_app
from .config import ServiceConfig


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="scoring-service")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8731)
    parser.add_argument("--backbone", default="mini:64x2")
    parser.add_argument("--max-len-event", type=int, default=25)
    parser.add_argument("--max-len-triple", type=int, default=35)
    parser.add_argument("--learning-rate", type=float, default=5e-6)
    parser.add_argument("--batch-size", type=int, default=64)
    parser.add_argument("--eval-every-steps", type=int, default=25)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--model-dir", default=None)
    args = parser.parse_args(argv)
    config = ServiceConfig(
        backbone=args.backbone,
        max_len_event=args.max_len_event,
        max_len_triple=args.max_len_triple,
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
        eval_every_steps=args.eval_every_steps,
        seed=args.seed,
        model_dir=args.model_dir,
    )
    uvicorn.run(create_app(config), host=args.host, port=args.port)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
