# Services module for arbitrage app
