// Copyright 2026 The beyondrec Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#pragma once

namespace beyondrec {

// Entry point of the `beyondrec` command. Returns the process exit code:
// 0 success, 2 usage, 3 unmet stage precondition, 4 upstream failure.
int run_cli(int argc, char** argv);

}  // namespace beyondrec
