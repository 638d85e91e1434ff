# Test package for LaserFlow
