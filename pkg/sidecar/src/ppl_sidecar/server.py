"""Protocol loop: line-delimited JSON requests on stdin, replies on stdout.

Requests:  {"id": N, "cmd": "train"|"score"|"reset", "texts": [[tok, ...], ...],
            "params": {"epochs": E, "block_size": B, "window": W, "seed": S}}
Replies:   {"id": N, "ok": true, "ppl": float, "k": int}   (score)
           {"id": N, "ok": true}                            (train/reset)
           {"id": N, "ok": false, "error": "..."}
Heartbeat: {"id": N, "progress": float}                     (during training)

Standard output carries protocol lines only; logging goes to stderr. A
request that fails gets an ``ok: false`` reply and the loop keeps serving;
the process exits nonzero only when it cannot continue at all.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import traceback
from typing import IO

from .config import SidecarConfig
from .model import ModelHost

logger = logging.getLogger(__name__)


def serve(stdin: IO[str], stdout: IO[str], config: SidecarConfig) -> None:
    host = ModelHost(config)

    def reply(payload: dict) -> None:
        stdout.write(json.dumps(payload) + "\n")
        stdout.flush()

    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
            if not isinstance(request, dict):
                raise ValueError("request is not an object")
        except (json.JSONDecodeError, ValueError):
            reply({"id": None, "ok": False, "error": "parse"})
            continue
        rid = request.get("id")
        cmd = request.get("cmd")
        try:
            if cmd == "train":
                host.train(
                    request.get("texts") or [],
                    request.get("params") or {},
                    heartbeat=lambda frac: reply({"id": rid, "progress": frac}),
                )
                reply({"id": rid, "ok": True})
            elif cmd == "score":
                ppl, k = host.score(request.get("texts") or [])
                reply({"id": rid, "ok": True, "ppl": ppl, "k": k})
            elif cmd == "reset":
                host.reset()
                reply({"id": rid, "ok": True})
            else:
                reply({"id": rid, "ok": False, "error": f"unknown cmd {cmd!r}"})
        except Exception as exc:  # answer every request exactly once
            logger.error("request %s failed:\n%s", rid, traceback.format_exc())
            reply({"id": rid, "ok": False, "error": f"{type(exc).__name__}: {exc}"})


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", help="SidecarConfig JSON file")
    args = parser.parse_args()
    logging.basicConfig(stream=sys.stderr, level=logging.INFO)
    config = SidecarConfig.from_file(args.config) if args.config else SidecarConfig()
    serve(sys.stdin, sys.stdout, config)


if __name__ == "__main__":
    main()
