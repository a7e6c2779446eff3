"""firetwin: a desk-scale wildfire digital twin with a UAV monitoring agent
trained by PPO under vision-language semantic reward shaping."""

__version__ = "0.1.0"
