// Entry point for the bundled page. The service hosts dist/ at the site
// root, so the API base URL is the page origin.

import { initApp } from "./app";

initApp(document);
