"""Tiny service instance for the frontend round-trip test.

Runs the real wire protocol over a fresh (untrained) model so the test
exercises handshake, retrieval, tick cadence, and state streaming without
minutes of training. Usage: python3 tests/fixture_server.py PORT
"""

import sys

from langsteer import experiments as X
from langsteer import models as M
from langsteer.server import make_app
from langsteer.service import ServiceCore


def build_core() -> ServiceCore:
    language = X.load_sim_language("arm")
    cfg = M.LatentActionConfig(state_dim=4, action_dim=4, latent_dim=2, embed_dim=64,
                               hidden_width=8, film_gen_hidden=8)
    bundle = M.new_bundle(cfg, "language", seed=0)
    return ServiceCore(scene=X.arm_scene(), table=language.table,
                       exemplars=language.exemplars,
                       checkpoints={"arm-lang": bundle}, dt=0.05)


def main() -> None:
    import uvicorn

    port = int(sys.argv[1]) if len(sys.argv) > 1 else 8801
    app = make_app(build_core())
    uvicorn.run(app, host="127.0.0.1", port=port, log_level="error")


if __name__ == "__main__":
    main()
