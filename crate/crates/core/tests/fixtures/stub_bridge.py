import json
import math
import sys

mode = sys.argv[1] if len(sys.argv) > 1 else "uniform"
for line in sys.stdin:
    req = json.loads(line)
    if mode == "exit":
        sys.exit(0)
    if mode == "garbage":
        print("not json", flush=True)
        continue
    if req["mode"] == "token":
        tokens = ["a", "b", "c", "<eos>"]
        reply = {"mode": "token", "version": "btp-bridge/1", "tokens": tokens,
                 "logprobs": [math.log(0.25)] * 4}
    else:
        cands = [
            {"text": "a", "tokens": ["a", "<eos>"], "seq_logprob": -0.5},
            {"text": "b", "tokens": ["b", "<eos>"], "seq_logprob": -1.25},
            {"text": "c", "tokens": ["c", "<eos>"], "seq_logprob": -2.0},
        ]
        n = 2 if mode == "short" else req["k"]
        reply = {"mode": "sequence", "version": "btp-bridge/1", "candidates": cands[:n]}
    print(json.dumps(reply), flush=True)
