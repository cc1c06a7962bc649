#!/usr/bin/env python3
"""Stand-in measurement command for external-backend protocol tests.

Reads one JSON request line from stdin and answers on stdout. The first
argument selects a behaviour; "echo" is the honest one.
"""
import json
import sys
import time


def main() -> int:
    mode = sys.argv[1] if len(sys.argv) > 1 else "echo"
    line = sys.stdin.readline()
    request = json.loads(line)

    if mode == "fail":
        return 3
    if mode == "sleep":
        time.sleep(30)
        return 0
    if mode == "garbage":
        print("this is not json")
        return 0

    results = []
    for i, arch in enumerate(request["archs"]):
        runs = request["runs_per_arch"]
        if mode == "badcount" and i == 0:
            runs = runs - 1
        value = 1.0 + 0.25 * sum(arch["unit_depths"])
        if mode == "negative" and i == 0:
            value = -value
        results.append({"arch_id": arch["arch_id"], "runs_ms": [value] * runs})

    if mode == "missing":
        results = results[1:]

    batch_id = request["batch_id"]
    if mode == "wrongbatch":
        batch_id = "someone-elses-batch"
    print(json.dumps({"batch_id": batch_id, "results": results}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
