#!/usr/bin/env python3
"""
Freeze the block-fit regression fixture for the reference geometry.

Golden scope:
- N=20, W=1, lambda_th=0.1
- Selected block count D and leading eigenvalues of Sigma
- Fitted block sizes for mu=0.9 and for the mass-matched mu
"""

from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import Any, Dict


REPO_ROOT = Path(__file__).resolve().parents[2]

# Ensure script works when executed directly via absolute path.
if str(REPO_ROOT) not in sys.path:
    sys.path.insert(0, str(REPO_ROOT))

from fasris.corr import (
    PortGeometry,
    build_sigma,
    eigen_spectrum,
    fit_block_sizes,
    matched_intra_block_mu,
    select_block_count,
)

DEFAULT_GOLDEN = REPO_ROOT / "tests" / "vectors" / "goldens" / "blockfit_n20_w1.json"

NUM_PORTS = 20
NORMALIZED_SIZE = 1.0
FIXED_MU = 0.9
EIGEN_THRESHOLD = 0.1
TOP_EIGENVALUES = 8


def generate_golden() -> Dict[str, Any]:
    spectrum = eigen_spectrum(build_sigma(PortGeometry(NUM_PORTS, NORMALIZED_SIZE)))
    num_blocks = select_block_count(spectrum, EIGEN_THRESHOLD)
    matched_mu = matched_intra_block_mu(spectrum, num_blocks, fallback=FIXED_MU)
    return {
        "_comment": "Block-fit regression fixture for N=20, W=1, lambda_th=0.1",
        "_note": "Frozen by tools/scripts/generate_blockfit_golden.py",
        "num_blocks": num_blocks,
        "fixed_mu": FIXED_MU,
        "fixed_block_sizes": list(fit_block_sizes(spectrum, num_blocks, FIXED_MU).block_sizes),
        "matched_mu": matched_mu,
        "matched_block_sizes": list(fit_block_sizes(spectrum, num_blocks, matched_mu).block_sizes),
        "top_eigenvalues": [float(v) for v in spectrum.values[:TOP_EIGENVALUES]],
    }


def main() -> None:
    golden = generate_golden()
    DEFAULT_GOLDEN.parent.mkdir(parents=True, exist_ok=True)
    DEFAULT_GOLDEN.write_text(json.dumps(golden, indent=2) + "\n", encoding="utf-8")
    print(f"Wrote golden: {DEFAULT_GOLDEN}")
    print(f"D={golden['num_blocks']}  fixed L={golden['fixed_block_sizes']}  matched L={golden['matched_block_sizes']}")


if __name__ == "__main__":
    main()
