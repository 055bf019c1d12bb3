// garble/tools/stub_transcriber.cpp
//
// Copyright 2026 The garble authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Scriptable stand-in for a command-line transcriber: reads WAV bytes on
// stdin and prints one transcript line. Behaviors for adapter tests:
//   stub_transcriber fixed <text...>   always answers <text...>
//   stub_transcriber meta              answers "bytes:<stdin length>"
//   stub_transcriber fail              consumes input, exits nonzero
//   stub_transcriber sleep <ms>        stalls before answering (timeouts)

#include <chrono>
#include <cstdio>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

int main(int argc, char** argv) {
  std::string mode = argc > 1 ? argv[1] : "meta";

  std::string input;
  char buf[65536];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, stdin)) > 0) input.append(buf, n);

  if (mode == "fail") {
    std::cerr << "stub transcriber: forced failure\n";
    return 3;
  }
  if (mode == "sleep") {
    const int ms = argc > 2 ? std::stoi(argv[2]) : 1000;
    std::this_thread::sleep_for(std::chrono::milliseconds(ms));
    std::cout << "slept " << ms << "\n";
    return 0;
  }
  if (mode == "fixed") {
    std::string text;
    for (int i = 2; i < argc; ++i) {
      if (i > 2) text += " ";
      text += argv[i];
    }
    std::cout << text << "\n";
    return 0;
  }
  std::cout << "bytes:" << input.size() << "\n";
  return 0;
}
