#include <malloc.h>

#include <wta/cli.hpp>

int main(int argc, char** argv) {
	// Conv workspaces are reallocated every step; keep them off mmap.
	mallopt(M_MMAP_THRESHOLD, 1 << 30);
	mallopt(M_TRIM_THRESHOLD, 1 << 30);
	return wta::cli::run(argc, argv);
}
