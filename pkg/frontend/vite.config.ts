import { defineConfig } from "vite";

export default defineConfig({
  // relative asset URLs, so dist/ works mounted at /ui/ as well as at /
  base: "./",
  server: {
    proxy: {
      "/health": "http://127.0.0.1:8000",
      "/project": "http://127.0.0.1:8000",
      "/edit": "http://127.0.0.1:8000",
      "/interpolate": "http://127.0.0.1:8000",
      "/semantic": "http://127.0.0.1:8000",
      "/transplant": "http://127.0.0.1:8000",
    },
  },
});
