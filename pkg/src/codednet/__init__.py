"""Cross-layer network utility maximization for coded wireless multicast over fading channels."""
