"""Serve the sidecar: flags mirror SidecarConfig."""

import argparse
import sys

import uvicorn

from .app import build_app
from .config import SidecarConfig


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--nli-model", required=True, help="hub id or local path")
    parser.add_argument("--gen-model", required=True, help="hub id or local path")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--quantize-int8", action="store_true")
    parser.add_argument("--max-input-tokens", type=int, default=512)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8100)
    args = parser.parse_args(argv)

    config = SidecarConfig(
        nli_model_id=args.nli_model,
        gen_model_id=args.gen_model,
        device=args.device,
        quantize_int8=args.quantize_int8,
        max_input_tokens=args.max_input_tokens,
        port=args.port,
    )
    uvicorn.run(build_app(config), host=args.host, port=config.port)
    return 0


if __name__ == "__main__":
    sys.exit(main())
