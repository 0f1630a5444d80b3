# HTTP-style request surface and subscription notifications over the resource tree
