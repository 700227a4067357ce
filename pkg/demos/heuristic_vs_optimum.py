"""Two-file-group search against the branch-and-bound optimum, K=4 workers.

Mapping loads [3,4,4,5], reducing loads [1/8,1/4,1/4,3/8], Zipf 0.56.
"""

import sys
import time

from hetcdc import (
    SystemConfig,
    exact_placement_expected_load,
    relaxation_lower_bound,
    round_robin_placement,
    solve_joint,
    two_file_group_search,
)

largest = int(sys.argv[1]) if len(sys.argv) > 1 else 6
print(f"{'N':>2} {'lower':>9} {'optimum':>9} {'2-group':>9} {'N1':>3} {'robin':>9} {'gap':>6} {'bnb s':>7}")
for n in range(2, largest + 1):
    cfg = SystemConfig.zipf([3, 4, 4, 5], ["1/8", "1/4", "1/4", "3/8"], n, 0.56)
    t0 = time.perf_counter()
    opt = solve_joint(cfg)
    secs = time.perf_counter() - t0
    tfg = two_file_group_search(cfg)
    rr = exact_placement_expected_load(round_robin_placement(cfg), cfg)
    gap = float(tfg.expected_load / opt.expected_load - 1) if opt.expected_load else 0.0
    print(f"{n:>2} {relaxation_lower_bound(cfg):9.5f} {float(opt.expected_load):9.5f} "
          f"{float(tfg.expected_load):9.5f} {tfg.split:>3} {float(rr):9.5f} {gap:6.1%} {secs:7.2f}")
    if n == largest:
        print(f"\noptimal placement at N={n}: {opt.placement}")
        print(f"two-file-group placement:   {tfg.placement}")
