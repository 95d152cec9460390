"""Loopback translator adapter speaking the NDJSON protocol on stdin/stdout.

Each request ``{"id": n, "start_s": a, "end_s": b, ...}`` is answered with
``{"id": n, "tokens": [...]}``. Useful for smoke-testing the adapter path:

    python -m segpref.echo_adapter --tokens hallo welt
"""
import argparse
import json
import sys


def serve(tokens, stdin=sys.stdin, stdout=sys.stdout) -> None:
    for line in stdin:
        if not line.strip():
            continue
        req = json.loads(line)
        stdout.write(json.dumps({"id": req["id"], "tokens": list(tokens)}) + "\n")
        stdout.flush()


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--tokens", nargs="*", default=["echo"])
    serve(ap.parse_args(argv).tokens)
    return 0


if __name__ == "__main__":
    sys.exit(main())
