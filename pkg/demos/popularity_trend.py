"""Expected load against Zipf skew at N=8 for both shuffle variants.

Round-robin ignores popularity, so its load barely moves; the two-file-group
placement replicates the popular files and profits as the skew grows.
"""

from hetcdc import SystemConfig, exact_placement_expected_load, round_robin_placement, two_file_group_search

print(f"{'theta':>5} {'variant':>7} {'2-group':>9} {'N1':>3} {'robin':>9} {'gap':>8}")
for i in range(7):
    theta = round(0.2 * i, 1)
    cfg = SystemConfig.zipf([3, 4, 4, 5], ["1/8", "1/4", "1/4", "3/8"], 8, theta)
    for variant in ("cdc", "ccdc"):
        tfg = two_file_group_search(cfg, variant)
        rr = float(exact_placement_expected_load(round_robin_placement(cfg), cfg, variant))
        load = float(tfg.expected_load)
        print(f"{theta:5.1f} {variant:>7} {load:9.5f} {tfg.split:>3} {rr:9.5f} {rr - load:8.5f}")
