# Cluster-game Nash seeking simulator
