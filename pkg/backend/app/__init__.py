# CymbaDiff Backend Package
