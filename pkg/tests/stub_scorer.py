"""Scriptable stand-in for an external scorer process.

Usage: python stub_scorer.py [mode]

Modes:
    ok          answer every train with ok and every score with ppl=7.0
    train-fail  refuse to train
    crash-on-score  exit(1) instead of answering a score request
    malformed   reply with a non-JSON line
    bad-ppl     reply with a negative perplexity
    wrong-id    reply with a mismatched request id
    heartbeat   emit progress lines before acknowledging training
    seed-echo   reply with ppl = $PPL_SCORER_SEED
"""

import json
import os
import sys


def main() -> None:
    mode = sys.argv[1] if len(sys.argv) > 1 else "ok"
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
        except json.JSONDecodeError:
            print(json.dumps({"id": None, "ok": False, "error": "parse"}), flush=True)
            continue
        rid = request.get("id")
        cmd = request.get("cmd")

        if mode == "malformed":
            print("this is not JSON", flush=True)
            continue
        if mode == "wrong-id":
            print(json.dumps({"id": 9999, "ok": True, "ppl": 1.0, "k": 1}), flush=True)
            continue

        if cmd == "train":
            if mode == "train-fail":
                print(json.dumps({"id": rid, "ok": False, "error": "boom"}), flush=True)
            elif mode == "heartbeat":
                for frac in (0.25, 0.5, 0.75):
                    print(json.dumps({"id": rid, "progress": frac}), flush=True)
                print(json.dumps({"id": rid, "ok": True}), flush=True)
            else:
                print(json.dumps({"id": rid, "ok": True}), flush=True)
        elif cmd == "score":
            if mode == "crash-on-score":
                sys.exit(1)
            texts = request.get("texts", [])
            k = sum(len(t) for t in texts) or 1
            if mode == "bad-ppl":
                ppl = -3.0
            elif mode == "seed-echo":
                ppl = float(os.environ.get("PPL_SCORER_SEED", "-1"))
            else:
                ppl = 7.0
            print(json.dumps({"id": rid, "ok": True, "ppl": ppl, "k": k}), flush=True)
        elif cmd == "reset":
            print(json.dumps({"id": rid, "ok": True}), flush=True)
        else:
            print(json.dumps({"id": rid, "ok": False, "error": f"unknown cmd {cmd!r}"}), flush=True)


if __name__ == "__main__":
    main()
