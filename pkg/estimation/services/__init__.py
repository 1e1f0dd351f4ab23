# Services module for estimation app
