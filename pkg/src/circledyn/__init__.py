"""circle-dyn: numerics for finitely generated groups acting on the circle.

Modules
-------
circle      points, arcs and arc systems on R/Z
maps        projective circle maps and perturbed rotations
words       reduced words, balls, cones, group systems
groups      built-in example groups
distortion  distortion coefficients and control inequalities
expansion   ball derivative sums, expansion scans, growing trees
markov      Markov partitions from bounded geodesic sums
minimal     Cantor minimal sets of ping-pong groups
config      group/experiment configuration files
cli         batch experiment driver
"""

__version__ = "0.1.0"
