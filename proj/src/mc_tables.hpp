#pragma once

namespace shapefit::detail {

// Standard 256-case marching cubes tables (Lorensen/Cline case enumeration,
// Bourke's listing). Cube corner c of cell (i,j,k):
//   0:(i,j,k) 1:(i+1,j,k) 2:(i+1,j+1,k) 3:(i,j+1,k)
//   4:(i,j,k+1) 5:(i+1,j,k+1) 6:(i+1,j+1,k+1) 7:(i,j+1,k+1)
// Edge e connects corners: 0:(0,1) 1:(1,2) 2:(2,3) 3:(3,0) 4:(4,5) 5:(5,6)
//   6:(6,7) 7:(7,4) 8:(0,4) 9:(1,5) 10:(2,6) 11:(3,7).
// Case bit c is set when corner c is below the isolevel (background here).
extern const int kMcEdgeTable[256];
extern const int kMcTriTable[256][16];

} // namespace shapefit::detail
