"""Indoor quadrotor autonomy sandbox.

Simulated flight dynamics, PID flight control behind a Twist command bridge,
2-D LiDAR SLAM, Monte Carlo localization, and costmap navigation, all driven
by one deterministic fixed-step runtime.
"""

__version__ = "0.1.0"
