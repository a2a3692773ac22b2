# ABOUTME: ODE integration: adaptive Dormand-Prince solver and forward sensitivity equations
# ABOUTME: Trajectories are sampled exactly at requested times via dense output
