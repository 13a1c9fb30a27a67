// Service base URL: one environment-style knob, settable before the bundle
// loads (window.LOBWATCH_API = "http://host:8080") or defaulting to the
// origin that served the page.

declare global {
  interface Window {
    LOBWATCH_API?: string;
  }
}

export function apiBase(): string {
  if (typeof window !== "undefined" && window.LOBWATCH_API) {
    return window.LOBWATCH_API.replace(/\/$/, "");
  }
  return "";
}
