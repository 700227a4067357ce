"""Three workers, three files, each file stored on a different pair.

Solves the shuffle program for the all-files demand, prints the optimal
plan, then runs the bit-level simulator and shows the coded messages.
"""

from hetcdc import Placement, SystemConfig, shuffle_plan, simulate

config = SystemConfig([2, 2, 2], ["1/3", "1/3", "1/3"], [0.5, 0.5, 0.5])
placement = Placement((0b011, 0b101, 0b110), 3)
demand = 0b111

plan = shuffle_plan(placement, config, demand)
print(f"placement: {placement}")
print(plan.dumps())

transcript = simulate(placement, config, demand, seed=1)
print(transcript.summary())
print(transcript.hexdump())
print(f"load {plan.load} TQ = {transcript.total_bits} bits "
      f"(T={transcript.iv_bits}, Q={transcript.num_functions})")
