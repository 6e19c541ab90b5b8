import { bootDemo } from "./app.js";

bootDemo();
