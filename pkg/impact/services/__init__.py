# Services module for impact app
