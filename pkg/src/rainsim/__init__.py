"""Rain simulation for LiDAR point clouds and sunny-to-rainy distillation losses."""
__version__ = "0.1.0"
