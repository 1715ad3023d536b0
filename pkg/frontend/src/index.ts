export * from "./types.js";
export * from "./apiClient.js";
export * from "./geo.js";
export * from "./pcp.js";
export * from "./state.js";
export * from "./runFlow.js";
export * from "./records.js";
export * from "./colormap.js";
