"""Run seeded simulator episodes in oracle mode (act exchange) or full mode
(trained NLU + template NLG) and print the metrics table.

    python scripts/run_simulation.py --episodes 500 --seed 7 --oracle
    python scripts/run_simulation.py --episodes 500 --seed 7 \
        --model-dir var/toy_model --domains attraction,hotel --no-booking
"""

import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from contextdial.cli import main as cli_main


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--episodes", type=int, default=500)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--oracle", action="store_true")
    parser.add_argument("--model-dir", help="directory with model.ckpt + codec.txt")
    parser.add_argument("--domains")
    parser.add_argument("--no-booking", action="store_true")
    parser.add_argument("--logs")
    args = parser.parse_args()

    argv = ["simulate", "--episodes", str(args.episodes), "--seed", str(args.seed)]
    if args.oracle:
        argv.append("--oracle")
    else:
        if not args.model_dir:
            parser.error("--model-dir is required for full mode")
        argv += ["--checkpoint", os.path.join(args.model_dir, "model.ckpt"),
                 "--codec", os.path.join(args.model_dir, "codec.txt")]
    if args.domains:
        argv += ["--domains", args.domains]
    if args.no_booking:
        argv.append("--no-booking")
    if args.logs:
        argv += ["--logs", args.logs]
    return cli_main(argv)


if __name__ == "__main__":
    sys.exit(main())
