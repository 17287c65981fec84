#!/usr/bin/env python3
# xCOMET-like stub: score = 1 / (1 + len(hyp)), one critical span over the
# first word plus an overlapping minor span, so normalization has work to do.
import json
import sys

header = json.loads(sys.stdin.readline())
print(json.dumps({"metric": header["metric"], "task": header["task"]}))
for line in sys.stdin:
    if not line.strip():
        continue
    rec = json.loads(line)
    hyp = rec["hyp"]
    spans = []
    if hyp:
        first = hyp.split(" ")[0] or hyp
        end = max(1, len(first))
        spans = [{"start": 0, "end": end, "severity": "critical"},
                 {"start": 0, "end": min(len(hyp), end + 1), "severity": "minor"}]
    print(json.dumps({"id": rec["id"], "value": 1.0 / (1 + len(hyp)), "spans": spans}))
