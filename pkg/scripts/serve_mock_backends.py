"""Serve the deterministic mock backends over HTTP for wire-level testing.

Prints the endpoint plus the environment overrides that point the run
command at it. Stop with Ctrl-C.
"""

import argparse
import sys
import time

from ztail.mock_server import MockModelServer


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--port", type=int, default=8080, help="0 picks a free port")
    parser.add_argument(
        "--fail-first", type=int, default=0, metavar="N",
        help="reject the first N requests, for retry experiments",
    )
    parser.add_argument(
        "--fail-mode", choices=("unavailable", "refuse", "garbage"),
        default="unavailable",
    )
    args = parser.parse_args(argv)

    server = MockModelServer(
        port=args.port, fail_first=args.fail_first, fail_mode=args.fail_mode
    ).start()
    print(f"mock backends listening on {server.endpoint}")
    print(f"  export NLI_ENDPOINT={server.endpoint}")
    print(f"  export GEN_ENDPOINT={server.endpoint}")
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        server.stop()
        print("stopped")
    return 0


if __name__ == "__main__":
    sys.exit(main())
