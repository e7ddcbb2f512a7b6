// Sorted list insert.  Walks to the window whose keys bracket the new
// key, then runs the synthesized update block for that window.
#include "list.h"

bool insert(int key){
    while(true){
        @@begin-traversal
        struct node * pred = head;
        struct node * curr = head->next;
        while(curr->key < key){
            pred = curr;
            curr = curr->next;
        }
        @@end-traversal
        if(curr->key == key)
            return false;
        @@begin-destructive-update
        @@insert::block1
        @@end-destructive-update
        return true;
    }
}
