"""
Run the pain regression toolkit locally.

Usage:
  # synthetic data, then leave-one-subject-out with defaults
  python run_local.py synth --out data/synth.csv --subjects 5 --frames 200 --dim 32 --noise 1.0 --seed 0
  python run_local.py loso --data data/synth.csv --out runs/loso

  # one model, then score it
  python run_local.py train --data data/synth.csv --out runs/model
  python run_local.py eval --data data/synth.csv --checkpoint runs/model/checkpoint.json --out runs/eval

Notes:
  1) Create and activate a virtualenv and install deps:
     python3 -m venv .venv
     source .venv/bin/activate
     pip install --upgrade pip
     pip install -r requirements.txt

  2) If you see ImportError, ensure the virtualenv is activated and dependencies are installed.
"""
#!/usr/bin/env python3
import logging
import sys


def main():
    try:
        from painreg.cli import main as cli_main
    except Exception as e:
        logging.getLogger("run_local").exception("Failed to import painreg: %s", e)
        print("Failed to import painreg:", file=sys.stderr)
        print(str(e), file=sys.stderr)
        sys.exit(2)
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
